"""Self-describing frame: fixed 32-byte little-endian header plus payload.

Layout::

    magic u32 | version u8 | codec u8 | flags u16 | rawBytes u64 | payloadBytes u64 | params 8B
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = 0x4C4F435A  # b"ZCOL" little-endian
VERSION = 1
HDR_BYTES = 32
FLAG_EMBEDDED_CODEBOOK = 0x0001
_KNOWN_FLAGS = FLAG_EMBEDDED_CODEBOOK

_HDR = struct.Struct("<IBBHQQ8s")
assert _HDR.size == HDR_BYTES


class CodecId(enum.IntEnum):
    RAW = 0
    FIXEDLEN = 1
    HUFFMAN = 2


class FrameError(ValueError):
    """A frame or payload failed validation."""


class EncodeError(RuntimeError):
    """An encoder could not produce a payload (capacity, unseen symbol, ...)."""


@dataclass(frozen=True)
class FrameHeader:
    codec: CodecId
    raw_bytes: int
    payload_bytes: int
    params: bytes = bytes(8)
    flags: int = 0
    magic: int = MAGIC
    version: int = VERSION

    def pack(self) -> bytes:
        return _HDR.pack(self.magic, self.version, int(self.codec), self.flags,
                         self.raw_bytes, self.payload_bytes, self.params)

    @classmethod
    def unpack(cls, buf) -> "FrameHeader":
        magic, version, codec, flags, raw, payload, params = _HDR.unpack(bytes(buf[:HDR_BYTES]))
        # codec kept as int here; validate_header decides if it is known
        return cls(codec, raw, payload, params, flags, magic, version)


@dataclass(frozen=True)
class Frame:
    header: FrameHeader
    payload: np.ndarray

    @property
    def total_bytes(self) -> int:
        return HDR_BYTES + self.header.payload_bytes

    def to_bytes(self) -> np.ndarray:
        out = np.empty(self.total_bytes, dtype=np.uint8)
        write_frame(out, self.header, self.payload)
        return out


def as_u8(buf) -> np.ndarray:
    if isinstance(buf, np.ndarray):
        return buf.view(np.uint8).reshape(-1)
    return np.frombuffer(buf, dtype=np.uint8)


def write_frame(out: np.ndarray, header: FrameHeader, payload) -> int:
    total = HDR_BYTES + header.payload_bytes
    if total > out.size:
        raise EncodeError(f"frame of {total} bytes does not fit in {out.size}")
    out[:HDR_BYTES] = np.frombuffer(header.pack(), dtype=np.uint8)
    out[HDR_BYTES:total] = as_u8(payload)[: header.payload_bytes]
    return total


def frame_commit_raw(raw, out: np.ndarray) -> int:
    """Write a RAW frame of ``raw`` into ``out``; 0 if it does not fit."""
    src = as_u8(raw)
    if HDR_BYTES + src.size > out.size:
        return 0
    hdr = FrameHeader(CodecId.RAW, src.size, src.size)
    return write_frame(out, hdr, src)


def validate_header(region, expected_raw_bytes: int | None = None) -> FrameHeader | None:
    """Parse and check a header; ``None`` means the receiver must take the RAW copy path."""
    buf = as_u8(region)
    if buf.size < HDR_BYTES:
        return None
    hdr = FrameHeader.unpack(buf)
    if hdr.magic != MAGIC or hdr.version != VERSION:
        return None
    if hdr.codec not in CodecId._value2member_map_:
        return None
    if hdr.flags & ~_KNOWN_FLAGS:
        return None
    if hdr.payload_bytes > buf.size - HDR_BYTES:
        return None
    if expected_raw_bytes is not None and hdr.raw_bytes != expected_raw_bytes:
        return None
    codec = CodecId(hdr.codec)
    if codec == CodecId.RAW and (hdr.payload_bytes != hdr.raw_bytes or hdr.flags):
        return None
    return FrameHeader(codec, hdr.raw_bytes, hdr.payload_bytes, hdr.params, hdr.flags)
