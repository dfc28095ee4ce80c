import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from zcoll.codec import (CODEBOOK_BYTES, FLAG_EMBEDDED_CODEBOOK, HDR_BYTES, MAGIC,
                         MAX_CODE_LEN, CodecId, EncodeError, FrameError, FrameHeader,
                         byte_histogram, decode_frame, decode_payload, encode_payload,
                         fixedlen_decode, fixedlen_encode, frame_commit_raw,
                         huffman_build_context, huffman_decode, huffman_decode_symbols,
                         huffman_encode, huffman_encode_symbols, symbol_bytes, unzigzag,
                         validate_header, write_frame, zigzag)
from zcoll.codec.huffman import limited_code_lengths

int_dtypes = st.sampled_from([np.int8, np.int16, np.int32, np.int64])


@st.composite
def symbol_streams(draw):
    dt = draw(int_dtypes)
    info = np.iinfo(dt)
    n = draw(st.integers(0, 300))
    kind = draw(st.sampled_from(["full", "small", "const"]))
    if kind == "full":
        elems = st.integers(int(info.min), int(info.max))
    elif kind == "small":
        elems = st.integers(-3, 3)
    else:
        v = draw(st.integers(int(info.min), int(info.max)))
        elems = st.just(v)
    return draw(arrays(dt, n, elements=elems))


def _prefix_free(ctx):
    words = [format(int(ctx.codes[s]), f"0{int(L)}b") for s, L in enumerate(ctx.lengths) if L]
    return not any(a != b and b.startswith(a) for a in words for b in words)


# -- zig-zag and FixedLen -----------------------------------------------------

def test_zigzag_mapping():
    assert zigzag(np.array([0, 1, -1, 2, -2])).tolist() == [0, 2, 1, 4, 3]
    assert unzigzag(zigzag(np.array([np.iinfo(np.int64).min, -7, 9]))).tolist() == [
        np.iinfo(np.int64).min, -7, 9]


def test_fixedlen_all_zero():
    payload, w = fixedlen_encode(np.zeros(4, dtype=np.int32))
    assert w == 1 and payload.tolist() == [0]


def test_fixedlen_hand_packed():
    payload, w = fixedlen_encode(np.array([0, 1, -1, 2], dtype=np.int32))
    # zig-zag [0,2,1,4] at 3 bits, LSB first: bits 4, 6 and 11 set
    assert w == 3 and payload.tolist() == [80, 8]
    assert fixedlen_decode(payload, 4, 3, np.int32).tolist() == [0, 1, -1, 2]


def test_fixedlen_int16_roundtrip(rng):
    s = rng.integers(-32768, 32768, size=5000).astype(np.int16)
    payload, w = fixedlen_encode(s)
    assert payload.size == math.ceil(s.size * w / 8)
    assert np.array_equal(fixedlen_decode(payload, s.size, w, np.int16), s)


@given(symbol_streams())
def test_fixedlen_roundtrip_property(s):
    payload, w = fixedlen_encode(s)
    assert 1 <= w <= 64
    assert np.array_equal(fixedlen_decode(payload, s.size, w, s.dtype), s)


def test_fixedlen_decode_rejects_bad_width_and_short_payload():
    payload, w = fixedlen_encode(np.arange(10, dtype=np.int32))
    with pytest.raises(FrameError):
        fixedlen_decode(payload, 10, 0, np.int32)
    with pytest.raises(FrameError):
        fixedlen_decode(payload[:-1], 10, w, np.int32)


# -- Huffman --------------------------------------------------------------------

def test_single_symbol_gets_one_bit():
    h = np.zeros(256, dtype=np.int64)
    h[42] = 10
    ctx = huffman_build_context(h)
    assert ctx.valid and ctx.lengths[42] == 1 and ctx.lengths.sum() == 1


def test_two_equal_bins():
    h = np.zeros(256, dtype=np.int64)
    h[[3, 9]] = 5
    ctx = huffman_build_context(h)
    assert ctx.lengths[3] == ctx.lengths[9] == 1
    assert ctx.expected_code_length(h) == 1.0


def test_all_zero_histogram_is_invalid():
    assert not huffman_build_context(np.zeros(256)).valid


def test_geometric_histogram_near_entropy():
    p = 0.5 ** np.arange(8)
    p /= p.sum()
    h = np.zeros(256, dtype=np.int64)
    h[:8] = np.round(p * 1e6).astype(np.int64)
    ctx = huffman_build_context(h)
    q = h[:8] / h.sum()
    entropy = -(q * np.log2(q)).sum()
    assert entropy <= ctx.expected_code_length(h) < entropy + 1


def test_length_limit_and_prefix_free():
    fib = [1, 1]
    while len(fib) < 60:
        fib.append(fib[-1] + fib[-2])
    h = np.zeros(256, dtype=np.int64)
    h[:60] = fib
    assert limited_code_lengths(h, 64).max() > MAX_CODE_LEN  # unconstrained tree is deeper
    ctx = huffman_build_context(h)
    assert ctx.lengths.max() <= MAX_CODE_LEN
    assert sum(2.0 ** -int(L) for L in ctx.lengths if L) <= 1.0
    assert _prefix_free(ctx)
    data = np.repeat(np.arange(60, dtype=np.uint8), 3)
    assert np.array_equal(huffman_decode(huffman_encode(data, ctx), data.size, ctx), data)


def test_canonical_reconstruction_from_lengths(rng):
    h = rng.integers(0, 50, 256)
    ctx = huffman_build_context(h)
    again = type(ctx).from_lengths(ctx.serialize())
    assert np.array_equal(again.codes, ctx.codes)
    assert _prefix_free(ctx)


def test_embedded_repeated_byte_size():
    s = np.full(1001, 5, dtype=np.int32)
    hdr, payload = huffman_encode_symbols(s, None, 1 << 20, 4)
    assert hdr.flags & FLAG_EMBEDDED_CODEBOOK
    assert payload.size == CODEBOOK_BYTES + math.ceil(1001 / 8)
    assert np.array_equal(huffman_decode_symbols(hdr, payload, None, np.int32), s)


def test_embedded_empty_input():
    hdr, payload = huffman_encode_symbols(np.zeros(0, dtype=np.int32), None, 1 << 10, 4)
    assert payload.size == CODEBOOK_BYTES
    assert huffman_decode_symbols(hdr, payload, None, np.int32).size == 0


def test_skewed_stream_beats_fixedlen(rng):
    s = np.where(rng.random(20000) < 0.97, 0, rng.integers(1, 100, 20000)).astype(np.int32)
    _, huff = huffman_encode_symbols(s, None, 1 << 20, 4)
    fixed, _ = fixedlen_encode(s)
    assert huff.size < fixed.size


def test_shared_context_unseen_symbol_fails():
    h = np.zeros(256, dtype=np.int64)
    h[0] = 1
    h[2] = 1
    ctx = huffman_build_context(h)
    with pytest.raises(EncodeError):
        huffman_encode_symbols(np.array([0, 1, 2], dtype=np.int32), ctx, 1 << 10, 4)


def test_huffman_capacity_shortfall():
    s = np.arange(-100, 100, dtype=np.int32)
    with pytest.raises(EncodeError):
        huffman_encode_symbols(s, None, CODEBOOK_BYTES + 4, 4)


@given(symbol_streams(), st.booleans())
def test_huffman_roundtrip_property(s, embedded):
    if embedded:
        ctx = None
    else:
        ctx = huffman_build_context(byte_histogram(symbol_bytes(s)[0]) + 1)
    hdr, payload = huffman_encode_symbols(s, ctx, 1 << 22, s.itemsize)
    assert np.array_equal(huffman_decode_symbols(hdr, payload, ctx, s.dtype), s)


def test_truncated_huffman_is_rejected(rng):
    s = rng.integers(-50, 50, 1000).astype(np.int32)
    hdr, payload = huffman_encode_symbols(s, None, 1 << 20, 4)
    with pytest.raises(FrameError):
        huffman_decode_symbols(hdr, payload[:-3], None, np.int32)


# -- frame ----------------------------------------------------------------------

def test_commit_raw_sizes():
    raw = np.arange(8, dtype=np.uint8)
    assert frame_commit_raw(raw, np.zeros(40, np.uint8)) == 40
    assert frame_commit_raw(raw, np.zeros(32, np.uint8)) == 0


def test_commit_raw_roundtrip(rng):
    raw = rng.integers(-1000, 1000, 333).astype(np.int32)
    out = np.zeros(HDR_BYTES + raw.nbytes, np.uint8)
    assert frame_commit_raw(raw, out) == out.size
    hdr = validate_header(out, raw.nbytes)
    assert hdr.codec == CodecId.RAW and hdr.payload_bytes == hdr.raw_bytes == raw.nbytes
    sym, fell_back = decode_frame(out, raw.nbytes, np.int32)
    assert not fell_back and np.array_equal(sym, raw)


def test_header_layout_is_little_endian():
    hdr = FrameHeader(CodecId.HUFFMAN, 0x0102, 0x0304, bytes(range(8)), 1)
    b = hdr.pack()
    assert len(b) == HDR_BYTES
    assert b[:4] == MAGIC.to_bytes(4, "little")
    assert b[4] == 1 and b[5] == 2 and b[6:8] == b"\x01\x00"
    assert b[8:16] == (0x0102).to_bytes(8, "little")
    assert b[16:24] == (0x0304).to_bytes(8, "little")
    assert FrameHeader.unpack(b) == hdr


def test_validate_rejects():
    out = np.zeros(64, np.uint8)
    frame_commit_raw(np.ones(8, np.uint8), out)
    good = out.copy()
    assert validate_header(good) is not None
    bad = good.copy()
    bad[0] ^= 0xFF
    assert validate_header(bad) is None
    bad = good.copy()
    bad[5] = 3
    assert validate_header(bad) is None
    bad = good.copy()
    bad[4] = 2
    assert validate_header(bad) is None
    assert validate_header(good[:20]) is None
    assert validate_header(good, expected_raw_bytes=9) is None


def test_write_frame_respects_capacity():
    hdr = FrameHeader(CodecId.FIXEDLEN, 40, 10)
    with pytest.raises(EncodeError):
        write_frame(np.zeros(41, np.uint8), hdr, np.zeros(10, np.uint8))


@pytest.mark.parametrize("codec", [CodecId.FIXEDLEN, CodecId.HUFFMAN])
def test_dispatch_roundtrip(rng, codec):
    s = rng.integers(-300, 300, 4096).astype(np.int32)
    ctx = huffman_build_context(byte_histogram(symbol_bytes(s)[0]))
    hdr, payload = encode_payload(codec, s, 1 << 20, ctx)
    out = np.zeros(HDR_BYTES + payload.size, np.uint8)
    write_frame(out, hdr, payload)
    sym, fell_back = decode_frame(out, s.nbytes, np.int32, ctx)
    assert not fell_back and np.array_equal(sym, s)
    assert np.array_equal(decode_payload(hdr, payload, np.int32, ctx), s)


def test_decode_frame_falls_back_on_garbage(rng):
    region = rng.integers(0, 256, 200).astype(np.uint8)
    sym, fell_back = decode_frame(region, 64, np.uint8)
    assert fell_back
    assert np.array_equal(sym, region[HDR_BYTES:HDR_BYTES + 64])


def test_decode_frame_missing_shared_context(rng):
    s = rng.integers(-5, 5, 1000).astype(np.int32)
    ctx = huffman_build_context(byte_histogram(symbol_bytes(s)[0]))
    hdr, payload = encode_payload(CodecId.HUFFMAN, s, 1 << 20, ctx)
    out = np.zeros(HDR_BYTES + s.nbytes, np.uint8)
    write_frame(out, hdr, payload)
    sym, fell_back = decode_frame(out, s.nbytes, np.int32, None)
    assert fell_back and sym.nbytes == s.nbytes
