"""Lossless entropy codecs and the wire frame format."""
from .dispatch import decode_frame, decode_payload, encode_payload
from .fixedlen import (bit_width, fixedlen_decode, fixedlen_encode, fixedlen_payload_bytes,
                       unzigzag, zigzag)
from .frame import (FLAG_EMBEDDED_CODEBOOK, HDR_BYTES, MAGIC, VERSION, CodecId, EncodeError,
                    Frame, FrameError, FrameHeader, frame_commit_raw, validate_header,
                    write_frame)
from .huffman import (CODEBOOK_BYTES, MAX_CODE_LEN, HuffmanContext, byte_histogram,
                      huffman_build_context, huffman_decode, huffman_decode_symbols,
                      huffman_encode, huffman_encode_symbols, invalid_context, symbol_bytes,
                      trim_width)

__all__ = [
    "CODEBOOK_BYTES", "FLAG_EMBEDDED_CODEBOOK", "HDR_BYTES", "MAGIC", "MAX_CODE_LEN", "VERSION",
    "CodecId", "EncodeError", "Frame", "FrameError", "FrameHeader", "HuffmanContext",
    "bit_width", "byte_histogram", "decode_frame", "decode_payload", "encode_payload",
    "fixedlen_decode", "fixedlen_encode", "fixedlen_payload_bytes", "frame_commit_raw",
    "huffman_build_context", "huffman_decode", "huffman_decode_symbols", "huffman_encode",
    "huffman_encode_symbols", "invalid_context", "symbol_bytes", "trim_width",
    "unzigzag", "validate_header", "write_frame", "zigzag",
]
