"""Codec dispatch on both sides of the wire."""
from __future__ import annotations

import numpy as np

from .fixedlen import (fixedlen_decode, fixedlen_encode, fixedlen_header,
                       parse_fixedlen_params)
from .frame import (HDR_BYTES, CodecId, EncodeError, FrameError, FrameHeader, as_u8,
                    validate_header)
from .huffman import HuffmanContext, huffman_decode_symbols, huffman_encode_symbols


def encode_payload(codec: CodecId, symbols: np.ndarray, capacity: int,
                   ctx: HuffmanContext | None = None,
                   embedded: bool = False) -> tuple[FrameHeader, np.ndarray]:
    """Materialize a non-RAW payload of at most ``capacity`` bytes or raise EncodeError."""
    elem = symbols.dtype.itemsize
    if codec == CodecId.FIXEDLEN:
        payload, width = fixedlen_encode(symbols)
        if payload.size > capacity:
            raise EncodeError("FixedLen payload exceeds capacity")
        return fixedlen_header(symbols.nbytes, payload.size, width, elem), payload
    if codec == CodecId.HUFFMAN:
        if not embedded and (ctx is None or not ctx.valid):
            raise EncodeError("no valid shared Huffman context")
        return huffman_encode_symbols(symbols, None if embedded else ctx, capacity, elem)
    raise EncodeError(f"{codec!r} is not an entropy codec")


def decode_payload(header: FrameHeader, payload, dtype, ctx: HuffmanContext | None) -> np.ndarray:
    payload = as_u8(payload)[: header.payload_bytes]
    dtype = np.dtype(dtype)
    if header.codec == CodecId.RAW:
        return payload.view(dtype).copy()
    if header.codec == CodecId.FIXEDLEN:
        width, elem = parse_fixedlen_params(header.params)
        if elem != dtype.itemsize or header.raw_bytes % elem:
            raise FrameError("FixedLen element size does not match the receive buffer")
        return fixedlen_decode(payload, header.raw_bytes // elem, width, dtype)
    if header.codec == CodecId.HUFFMAN:
        out = huffman_decode_symbols(header, payload, ctx, dtype)
        if out.size * dtype.itemsize != header.raw_bytes:
            raise FrameError("Huffman element size does not match the receive buffer")
        return out
    raise FrameError(f"unknown codec {header.codec}")


def decode_frame(region, raw_bytes: int, dtype, ctx: HuffmanContext | None = None):
    """Receiver path: validate, then decode or memcpy.

    Returns ``(symbols, fell_back)``. Any validation or decode failure copies
    ``raw_bytes`` verbatim from just past the header, as a RAW frame would be.
    Bytes past the end of ``region`` read as zero.
    """
    buf = as_u8(region)
    dtype = np.dtype(dtype)
    hdr = validate_header(buf, expected_raw_bytes=raw_bytes)
    if hdr is not None:
        try:
            return decode_payload(hdr, buf[HDR_BYTES:], dtype, ctx), False
        except FrameError:
            pass
    out = np.zeros(raw_bytes, dtype=np.uint8)
    avail = buf[HDR_BYTES:HDR_BYTES + raw_bytes]
    out[: avail.size] = avail
    return out.view(dtype), True
