"""Fixed-width bit packing of zig-zag mapped integer symbols."""
from __future__ import annotations

import struct

import numpy as np

from . import _kernels
from .frame import CodecId, FrameError, FrameHeader

_PARAMS = struct.Struct("<BB6x")
ELEM_SIZES = (1, 2, 4, 8)


def zigzag(values) -> np.ndarray:
    v = np.asarray(values).astype(np.int64, copy=False)
    return ((v << 1) ^ (v >> 63)).view(np.uint64)


def unzigzag(zz) -> np.ndarray:
    z = np.asarray(zz, dtype=np.uint64)
    return ((z >> np.uint64(1)).view(np.int64)) ^ -((z & np.uint64(1)).view(np.int64))


def bit_width(max_zigzag: int) -> int:
    return max(1, int(max_zigzag).bit_length())


def fixedlen_payload_bytes(count: int, width: int) -> int:
    return (count * width + 7) // 8


def fixedlen_encode(symbols) -> tuple[np.ndarray, int]:
    """Return ``(payload, width)``; the caller checks the payload against its budget."""
    zz = zigzag(symbols)
    width = bit_width(int(zz.max()) if zz.size else 0)
    out = np.zeros(fixedlen_payload_bytes(zz.size, width), dtype=np.uint8)
    _kernels.pack_fixed(np.ascontiguousarray(zz), width, out)
    return out, width


def fixedlen_decode(payload, count: int, width: int, dtype=np.int64) -> np.ndarray:
    if not 1 <= width <= 64:
        raise FrameError(f"bit width {width} outside [1, 64]")
    payload = np.ascontiguousarray(payload, dtype=np.uint8)
    if payload.size != fixedlen_payload_bytes(count, width):
        raise FrameError(
            f"payload of {payload.size} bytes does not match {count} symbols at {width} bits"
        )
    zz = np.empty(count, dtype=np.uint64)
    _kernels.unpack_fixed(payload, count, width, zz)
    vals = unzigzag(zz)
    info = np.iinfo(dtype)
    if vals.size and (vals.min() < info.min or vals.max() > info.max):
        raise FrameError(f"decoded symbols overflow {np.dtype(dtype).name}")
    return vals.astype(dtype)


def fixedlen_header(raw_bytes: int, payload_bytes: int, width: int, elem_bytes: int) -> FrameHeader:
    return FrameHeader(CodecId.FIXEDLEN, raw_bytes, payload_bytes, _PARAMS.pack(width, elem_bytes))


def parse_fixedlen_params(params: bytes) -> tuple[int, int]:
    width, elem = _PARAMS.unpack(params)
    if elem not in ELEM_SIZES:
        raise FrameError(f"bad element size {elem}")
    return width, elem
