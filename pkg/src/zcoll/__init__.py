"""Compression-enabled ring collectives on a simulated network."""
from .collectives import CollectiveOp, CollectiveRequest, Communicator, RankComm
from .codec import CodecId, HuffmanContext, decode_frame, huffman_build_context
from .pipeline import OverlapMode, run_pipelined, run_serialized, stagger_chunks
from .quant import (ErrorBoundedQuantizer, PrequantizedPassthrough, QSGDQuantizer,
                    QuantizedStream, dequantize, eb_quantize, qsgd_quantize)
from .rea import ArbitrationConfig, arbitrate_plan, encode_best
from .transport import Channel, NetworkModel, Regime

__version__ = "0.1.0"

__all__ = [
    "ArbitrationConfig", "Channel", "CodecId", "CollectiveOp", "CollectiveRequest",
    "Communicator", "ErrorBoundedQuantizer", "HuffmanContext", "NetworkModel", "OverlapMode",
    "PrequantizedPassthrough", "QSGDQuantizer", "QuantizedStream", "RankComm", "Regime",
    "arbitrate_plan", "decode_frame", "dequantize", "eb_quantize", "encode_best",
    "huffman_build_context", "qsgd_quantize", "run_pipelined", "run_serialized",
    "stagger_chunks",
]
