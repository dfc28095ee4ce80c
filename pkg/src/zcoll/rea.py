"""Runtime entropy arbitration: per-batch choice of RAW, FixedLen or Huffman.

Each candidate codec gets a predicted critical-path time::

    T_c = alpha_c + lam_enc_c * E_c + P_c / beta_eff + lam_dec_c * D_c

where ``P_c`` is the predicted payload from a bounded sample, ``E_c``/``D_c``
the encode/decode cost and ``lam`` the fraction of that cost left exposed by
overlap. RAW (``P = rawBytes``, no codec cost) is always a candidate; entropy
codecs must fit the staging budget, clear the minimum gain and pass their
enable gates. The cheapest admissible candidate wins, ties going to the
simpler codec.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .codec import (CODEBOOK_BYTES, HDR_BYTES, CodecId, EncodeError, HuffmanContext,
                    byte_histogram, encode_payload, fixedlen_payload_bytes, frame_commit_raw,
                    huffman_build_context, symbol_bytes, write_frame)
from .codec.fixedlen import bit_width, zigzag
from .transport import NetworkModel, TransportHint

SAMPLE_BYTES = 64 * 1024
CODEC_ORDER = (CodecId.RAW, CodecId.FIXEDLEN, CodecId.HUFFMAN)
PINNED = {"auto": None, "raw": CodecId.RAW, "fixed": CodecId.FIXEDLEN,
          "huffman": CodecId.HUFFMAN}


@dataclass(frozen=True)
class CodecCost:
    alpha: float = 0.0
    enc_rate: float = math.inf  # bytes/s
    dec_rate: float = math.inf
    lam_enc: float = 1.0
    lam_dec: float = 1.0

    def __post_init__(self):
        for lam in (self.lam_enc, self.lam_dec):
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"exposed fraction {lam} outside [0, 1]")

    def encode_time(self, raw_bytes: int) -> float:
        return raw_bytes / self.enc_rate

    def decode_time(self, raw_bytes: int) -> float:
        return raw_bytes / self.dec_rate


# Device-class codec throughput for the simulated clock; Python wall time is
# available through measure_cost_model().
DEVICE_COSTS = {
    CodecId.RAW: CodecCost(0.0, math.inf, math.inf, 0.0, 0.0),
    CodecId.FIXEDLEN: CodecCost(4e-6, 300e9, 300e9, 0.25, 0.25),
    CodecId.HUFFMAN: CodecCost(8e-6, 120e9, 100e9, 0.25, 0.25),
}


def with_exposure(costs: dict, lam: float) -> dict:
    return {c: (v if c == CodecId.RAW else replace(v, lam_enc=lam, lam_dec=lam))
            for c, v in costs.items()}


@dataclass(frozen=True)
class ArbitrationConfig:
    small_batch_threshold: int = 4096
    huff_threshold: int = 64 * 1024
    min_gain_permil: int = 50
    costs: dict = field(default_factory=lambda: dict(DEVICE_COSTS))
    codec: str = "auto"
    huffman_mode: str = "shared"
    sample_bytes: int = SAMPLE_BYTES

    def __post_init__(self):
        if not 0 <= self.min_gain_permil <= 1000:
            raise ValueError("min_gain_permil must lie in [0, 1000]")
        if self.codec not in PINNED:
            raise ValueError(f"codec must be one of {sorted(PINNED)}")
        if self.huffman_mode not in ("shared", "embedded"):
            raise ValueError("huffman_mode must be 'shared' or 'embedded'")
        if not 0 < self.sample_bytes <= SAMPLE_BYTES:
            raise ValueError(f"sample window must lie in (0, {SAMPLE_BYTES}]")

    @property
    def embedded(self) -> bool:
        return self.huffman_mode == "embedded"

    def serialized(self) -> "ArbitrationConfig":
        """Config for the no-overlap ablation: codec work fully exposed."""
        return replace(self, costs=with_exposure(self.costs, 1.0))

    def pinned(self, codec: str) -> "ArbitrationConfig":
        return replace(self, codec=codec)


@dataclass(frozen=True)
class SampleStats:
    sample_bytes: int
    max_zigzag: int
    histogram: np.ndarray
    trim_bytes: int
    expected_code_len: float | None


@dataclass(frozen=True)
class CodecEstimate:
    codec: CodecId
    predicted_payload: float
    alpha: float
    enc_cost: float
    dec_cost: float
    lam_enc: float
    lam_dec: float
    predicted_time: float
    admissible: bool = True
    reason: str = ""


@dataclass(frozen=True)
class ArbitrationPlan:
    codec: CodecId
    estimates: dict


class EncodeResult(NamedTuple):
    codec: int
    payload_bytes: int
    total_bytes: int


FAILED = EncodeResult(0, 0, 0)


def predicted_time(alpha, lam_enc, enc_cost, payload, beta_eff, lam_dec, dec_cost) -> float:
    return alpha + lam_enc * enc_cost + payload / beta_eff + lam_dec * dec_cost


def sample_window(raw_bytes: int, cfg: ArbitrationConfig | None = None) -> int:
    limit = cfg.sample_bytes if cfg else SAMPLE_BYTES
    return min(raw_bytes, limit)


def profile_sample(raw: np.ndarray, ctx: HuffmanContext | None,
                   sample_bytes: int = SAMPLE_BYTES) -> SampleStats:
    """One pass over the leading window: max zig-zag value and a byte histogram."""
    raw = np.asarray(raw)
    nbytes = min(raw.nbytes, sample_bytes)
    sample = raw[: max(1, nbytes // raw.itemsize)] if raw.size else raw
    zz = zigzag(sample)
    max_zz = int(zz.max()) if zz.size else 0
    data, width = symbol_bytes(sample)
    hist = byte_histogram(data)
    ecl = ctx.expected_code_length(hist) if ctx is not None and ctx.valid else None
    return SampleStats(nbytes, max_zz, hist, width, ecl)


def predict_payload(codec: CodecId, raw_bytes: int, stats: SampleStats, elem_bytes: int,
                    ctx: HuffmanContext | None = None, embedded: bool = False) -> float:
    count = raw_bytes // elem_bytes
    if codec == CodecId.RAW:
        return raw_bytes
    if codec == CodecId.FIXEDLEN:
        return fixedlen_payload_bytes(count, bit_width(stats.max_zigzag))
    if codec == CodecId.HUFFMAN:
        coded = count * stats.trim_bytes
        if embedded:
            own = huffman_build_context(stats.histogram)
            return math.ceil(coded * own.expected_code_length(stats.histogram) / 8) + CODEBOOK_BYTES
        ecl = stats.expected_code_len
        if ecl is None or ctx is None or not ctx.valid:
            return math.inf
        if math.isinf(ecl):
            return math.inf
        return math.ceil(coded * ecl / 8)
    raise ValueError(codec)


def _gain_ok(raw_bytes: int, payload: float, min_gain_permil: int) -> bool:
    return (raw_bytes - payload) * 1000 >= min_gain_permil * raw_bytes


def arbitrate_plan(raw_bytes: int, payload_cap: int, stats: SampleStats, hint: TransportHint,
                   ctx: HuffmanContext | None, cfg: ArbitrationConfig,
                   elem_bytes: int = 4) -> ArbitrationPlan:
    estimates = {}
    for codec in CODEC_ORDER:
        cost = cfg.costs[codec]
        if codec == CodecId.RAW:
            est = CodecEstimate(codec, raw_bytes, 0.0, 0.0, 0.0, 0.0, 0.0,
                                raw_bytes / hint.beta_eff)
            estimates[codec] = est
            continue
        payload = predict_payload(codec, raw_bytes, stats, elem_bytes, ctx, cfg.embedded)
        enc, dec = cost.encode_time(raw_bytes), cost.decode_time(raw_bytes)
        t = predicted_time(cost.alpha, cost.lam_enc, enc, payload, hint.beta_eff,
                           cost.lam_dec, dec)
        reason = ""
        if codec == CodecId.HUFFMAN and not cfg.embedded and (ctx is None or not ctx.valid):
            reason = "context"
        elif codec == CodecId.HUFFMAN and raw_bytes < cfg.huff_threshold:
            reason = "threshold"
        # header counted against the payload budget on top of the frame's own: keeps a margin
        elif payload + HDR_BYTES > payload_cap:
            reason = "capacity"
        elif not _gain_ok(raw_bytes, payload, cfg.min_gain_permil):
            reason = "gain"
        estimates[codec] = CodecEstimate(codec, payload, cost.alpha, enc, dec, cost.lam_enc,
                                         cost.lam_dec, t, not reason, reason)
    best = CodecId.RAW
    for codec in CODEC_ORDER[1:]:
        est = estimates[codec]
        if est.admissible and est.predicted_time < estimates[best].predicted_time:
            best = codec
    return ArbitrationPlan(best, estimates)


def accept_realized(payload_bytes: int, raw_bytes: int, payload_cap: int,
                    min_gain_permil: int) -> bool:
    return payload_bytes <= payload_cap and _gain_ok(raw_bytes, payload_bytes, min_gain_permil)


def encode_best(raw: np.ndarray, out: np.ndarray, ctx: HuffmanContext | None,
                cfg: ArbitrationConfig, hint: TransportHint | None = None,
                plan_log: list | None = None) -> EncodeResult:
    """Write one frame for ``raw`` into the staging region ``out``.

    Returns ``(codec, payloadBytes, totalBytes)``; ``(0, 0, 0)`` when not even
    a RAW frame fits, in which case nothing may be enqueued.
    """
    raw = np.ascontiguousarray(raw)
    raw_bytes = raw.nbytes
    stage_cap = out.size
    if raw_bytes <= 0 or stage_cap <= HDR_BYTES:
        return FAILED
    payload_cap = stage_cap - HDR_BYTES
    pinned = PINNED[cfg.codec]

    if pinned is None and raw_bytes <= cfg.small_batch_threshold:
        return _commit_raw_or_fail(raw, out)

    if pinned is None:
        hint = hint or NetworkModel().hint()
        stats = profile_sample(raw, ctx, cfg.sample_bytes)
        plan = arbitrate_plan(raw_bytes, payload_cap, stats, hint, ctx, cfg, raw.itemsize)
        choice = plan.codec
        if plan_log is not None:
            plan_log.append(plan)
    else:
        choice = pinned

    if choice != CodecId.RAW:
        try:
            header, payload = encode_payload(choice, raw, payload_cap, ctx, cfg.embedded)
        except EncodeError:
            header = None
        if header is not None and accept_realized(header.payload_bytes, raw_bytes,
                                                  payload_cap, cfg.min_gain_permil):
            total = write_frame(out, header, payload)
            return EncodeResult(int(choice), header.payload_bytes, total)
    return _commit_raw_or_fail(raw, out)


def _commit_raw_or_fail(raw, out) -> EncodeResult:
    total = frame_commit_raw(raw, out)
    if total == 0:
        return FAILED
    return EncodeResult(int(CodecId.RAW), total - HDR_BYTES, total)


def measure_cost_model(nbytes: int = 1 << 22, seed: int = 0, lam: float = 0.25) -> dict:
    """Time this process's codecs on a synthetic skewed batch."""
    from .codec import decode_payload

    rng = np.random.default_rng(seed)
    sym = (rng.geometric(0.5, nbytes // 4) - 1).astype(np.int32)
    ctx = huffman_build_context(byte_histogram(symbol_bytes(sym)[0]) + 1)
    costs = {CodecId.RAW: DEVICE_COSTS[CodecId.RAW]}
    for codec in (CodecId.FIXEDLEN, CodecId.HUFFMAN):
        encode_payload(codec, sym[:1024], 1 << 20, ctx)  # warm the compiled kernels
        t0 = time.perf_counter()
        hdr, payload = encode_payload(codec, sym, 1 << 30, ctx)
        t1 = time.perf_counter()
        decode_payload(hdr, payload, np.int32, ctx)
        t2 = time.perf_counter()
        costs[codec] = CodecCost(0.0, sym.nbytes / (t1 - t0), sym.nbytes / (t2 - t1), lam, lam)
    return costs
