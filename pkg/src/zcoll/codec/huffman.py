"""Canonical Huffman coding over a 256-symbol byte alphabet.

Symbol streams are coded as the little-endian bytes of their zig-zag values,
trimmed to the fewest bytes that hold the largest value. For small symbols
that makes each byte exactly one symbol, which is what lets the code approach
the stream's entropy instead of paying one bit for every high-order zero byte.
"""
from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .fixedlen import ELEM_SIZES, unzigzag, zigzag
from .frame import FLAG_EMBEDDED_CODEBOOK, CodecId, EncodeError, FrameError, FrameHeader

MAX_CODE_LEN = 32
CODEBOOK_BYTES = 256
_PARAMS = struct.Struct("<IBB2x")


def _code_lengths(counts: np.ndarray) -> np.ndarray:
    lengths = np.zeros(256, dtype=np.int64)
    live = [int(s) for s in np.flatnonzero(counts)]
    if not live:
        return lengths
    if len(live) == 1:
        lengths[live[0]] = 1
        return lengths
    # (weight, tiebreak, node); leaves tie-break on symbol value, merged nodes after all leaves
    heap = [(int(counts[s]), s, s) for s in live]
    heapq.heapify(heap)
    parent = {}
    nxt = 256
    while len(heap) > 1:
        w1, _, a = heapq.heappop(heap)
        w2, _, b = heapq.heappop(heap)
        parent[a] = parent[b] = nxt
        heapq.heappush(heap, (w1 + w2, nxt, nxt))
        nxt += 1
    for s in live:
        depth, node = 0, s
        while node in parent:
            node = parent[node]
            depth += 1
        lengths[s] = depth
    return lengths


def limited_code_lengths(histogram, max_len: int = MAX_CODE_LEN) -> np.ndarray:
    counts = np.asarray(histogram, dtype=np.int64).copy()
    lengths = _code_lengths(counts)
    while lengths.max() > max_len:
        # flatten the distribution until the tree is shallow enough
        counts = np.where(counts > 0, np.maximum(counts >> 1, 1), 0)
        lengths = _code_lengths(counts)
    return lengths


def canonical_codes(lengths: np.ndarray) -> np.ndarray:
    codes = np.zeros(256, dtype=np.uint32)
    order = sorted((int(L), s) for s, L in enumerate(lengths) if L > 0)
    code, prev = 0, 0
    for L, s in order:
        code <<= L - prev
        codes[s] = code
        code += 1
        prev = L
    return codes


@dataclass(frozen=True)
class HuffmanContext:
    lengths: np.ndarray
    codes: np.ndarray = field(repr=False)
    valid: bool = True
    # decode tables
    first: np.ndarray = field(repr=False, default=None)
    count: np.ndarray = field(repr=False, default=None)
    offset: np.ndarray = field(repr=False, default=None)
    symbols: np.ndarray = field(repr=False, default=None)
    max_len: int = 0

    @classmethod
    def from_lengths(cls, lengths) -> "HuffmanContext":
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.shape != (256,) or lengths.min() < 0 or lengths.max() > MAX_CODE_LEN:
            raise FrameError("code lengths must be 256 values in [0, 32]")
        live = lengths[lengths > 0]
        if live.size == 0:
            return invalid_context()
        if np.sum(2.0 ** -live.astype(np.float64)) > 1.0:
            raise FrameError("code lengths violate the Kraft inequality")
        max_len = int(live.max())
        count = np.bincount(lengths, minlength=MAX_CODE_LEN + 2)[: MAX_CODE_LEN + 2].astype(np.int64)
        count[0] = 0
        first = np.zeros(MAX_CODE_LEN + 2, dtype=np.int64)
        offset = np.zeros(MAX_CODE_LEN + 2, dtype=np.int64)
        code = 0
        for L in range(1, MAX_CODE_LEN + 1):
            first[L] = code
            offset[L + 1] = offset[L] + count[L]
            code = (code + count[L]) << 1
        order = sorted((int(L), s) for s, L in enumerate(lengths) if L > 0)
        syms = np.zeros(256, dtype=np.uint8)
        syms[: len(order)] = [s for _, s in order]
        return cls(lengths.astype(np.uint8), canonical_codes(lengths), True,
                   first, count, offset, syms, max_len)

    def expected_code_length(self, histogram) -> float:
        """Mean bits per byte for ``histogram`` under this code; inf if a seen byte has no code."""
        h = np.asarray(histogram, dtype=np.float64)
        total = h.sum()
        if not self.valid or total == 0:
            return float("inf")
        L = self.lengths.astype(np.float64)
        if np.any((h > 0) & (L == 0)):
            return float("inf")
        return float((h * L).sum() / total)

    def serialize(self) -> np.ndarray:
        return self.lengths.astype(np.uint8)


def invalid_context() -> HuffmanContext:
    z = np.zeros(256, dtype=np.uint8)
    return HuffmanContext(z, z.astype(np.uint32), valid=False)


def huffman_build_context(histogram) -> HuffmanContext:
    h = np.asarray(histogram)
    if h.shape != (256,):
        raise ValueError("histogram must have 256 bins")
    if not np.any(h > 0):
        return invalid_context()
    return HuffmanContext.from_lengths(limited_code_lengths(h))


def byte_histogram(data) -> np.ndarray:
    return np.bincount(np.asarray(data, dtype=np.uint8).ravel(), minlength=256).astype(np.int64)


def huffman_encode(data, ctx: HuffmanContext, capacity: int | None = None) -> np.ndarray:
    """Encode a byte array; raises :class:`EncodeError` on unseen bytes or capacity shortfall."""
    if not ctx.valid:
        raise EncodeError("invalid Huffman context")
    data = np.ascontiguousarray(data, dtype=np.uint8)
    worst = (data.size * int(ctx.lengths.max()) + 7) // 8
    cap = worst if capacity is None else min(capacity, worst)
    out = np.empty(max(cap, 0), dtype=np.uint8)
    n = _kernels.huff_encode(data, ctx.codes, ctx.lengths, out)
    if n == _kernels.ERR_UNSEEN_SYMBOL:
        raise EncodeError("byte value has no code in the shared context")
    if n < 0:
        raise EncodeError("Huffman payload exceeds capacity")
    return out[:n]


def huffman_decode(payload, n_out: int, ctx: HuffmanContext) -> np.ndarray:
    if not ctx.valid:
        raise FrameError("invalid Huffman context")
    payload = np.ascontiguousarray(payload, dtype=np.uint8)
    out = np.empty(n_out, dtype=np.uint8)
    used = _kernels.huff_decode(payload, n_out, ctx.first, ctx.count, ctx.offset,
                                ctx.symbols, ctx.max_len, out)
    if used < 0:
        raise FrameError("malformed or truncated Huffman bitstream")
    if used != payload.size:
        raise FrameError(f"{payload.size - used} trailing bytes after Huffman bitstream")
    return out


# -- symbol streams ---------------------------------------------------------

def trim_width(max_zigzag: int) -> int:
    return max(1, (int(max_zigzag).bit_length() + 7) // 8)


def symbol_bytes(symbols, width: int | None = None) -> tuple[np.ndarray, int]:
    """Zig-zag symbols as little-endian bytes, ``width`` bytes per symbol."""
    zz = np.ascontiguousarray(zigzag(symbols), dtype="<u8")
    if width is None:
        width = trim_width(int(zz.max()) if zz.size else 0)
    return zz.view(np.uint8).reshape(-1, 8)[:, :width].ravel(), width


def bytes_to_symbols(data: np.ndarray, width: int, count: int) -> np.ndarray:
    buf = np.zeros((count, 8), dtype=np.uint8)
    buf[:, :width] = data.reshape(count, width)
    return unzigzag(buf.view("<u8").ravel())


def huffman_encode_symbols(symbols, ctx: HuffmanContext | None, capacity: int,
                           elem_bytes: int) -> tuple[FrameHeader, np.ndarray]:
    """``ctx=None`` selects embedded-codebook mode, built from this stream alone."""
    data, width = symbol_bytes(symbols)
    embedded = ctx is None
    if embedded:
        ctx = huffman_build_context(byte_histogram(data))
        if not ctx.valid:  # empty stream
            ctx = HuffmanContext.from_lengths(np.r_[1, np.zeros(255, dtype=np.int64)])
        head = ctx.serialize()
    else:
        head = np.empty(0, dtype=np.uint8)
    body = huffman_encode(data, ctx, capacity - head.size)
    payload = np.concatenate([head, body])
    raw_bytes = np.asarray(symbols).size * elem_bytes
    params = _PARAMS.pack(head.size, width, elem_bytes)
    flags = FLAG_EMBEDDED_CODEBOOK if embedded else 0
    return FrameHeader(CodecId.HUFFMAN, raw_bytes, payload.size, params, flags), payload


def huffman_decode_symbols(header: FrameHeader, payload, shared: HuffmanContext | None,
                           dtype) -> np.ndarray:
    book_len, width, elem = _PARAMS.unpack(header.params)
    if elem not in ELEM_SIZES or not 1 <= width <= 8:
        raise FrameError("bad Huffman params")
    if header.raw_bytes % elem:
        raise FrameError("raw size is not a whole number of symbols")
    count = header.raw_bytes // elem
    payload = np.asarray(payload, dtype=np.uint8)
    if header.flags & FLAG_EMBEDDED_CODEBOOK:
        if book_len != CODEBOOK_BYTES or payload.size < CODEBOOK_BYTES:
            raise FrameError("embedded codebook missing")
        ctx = HuffmanContext.from_lengths(payload[:CODEBOOK_BYTES])
        body = payload[CODEBOOK_BYTES:]
    else:
        if book_len != 0:
            raise FrameError("unexpected codebook length in shared-context frame")
        if shared is None or not shared.valid:
            raise FrameError("frame needs the shared Huffman context")
        ctx, body = shared, payload
    data = huffman_decode(body, count * width, ctx)
    vals = bytes_to_symbols(data, width, count)
    info = np.iinfo(dtype)
    if vals.size and (vals.min() < info.min or vals.max() > info.max):
        raise FrameError(f"decoded symbols overflow {np.dtype(dtype).name}")
    return vals.astype(dtype)
