"""Experiment sweeps on the simulated clock.

A run follows one rank of a symmetric ring. For every ring step the bytes
that rank sends are materialized for real (quantized, summed where the
collective reduces, arbitrated and encoded), so frame sizes and codec
choices are genuine. Long steps are sampled: at most ``max_batches_per_step``
distinct batches are built and the rest reuse their results in rotation.
Codec compute uses the configured cost model; the link uses the network
model; :mod:`zcoll.pipeline` turns the per-batch plan into a makespan.
"""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from ..codec import CodecId, HDR_BYTES, byte_histogram, huffman_build_context, symbol_bytes
from ..pipeline import (BatchPlan, INPRIMITIVE_THRESHOLD, OverlapMode, exposed_codec_time,
                        inprimitive_enabled, run, write_timeline_csv)
from ..quant import compact_itemsize
from ..rea import (DEVICE_COSTS, ArbitrationConfig, encode_best, measure_cost_model,
                   with_exposure)
from ..transport import GiB, NetworkModel, Regime, SLOT_BYTES, STEPS, batch_raw_bytes
from .data import Distribution, gen_data

REDUCE_RATE = 400e9  # bytes/s, symbol-domain integer add
CODEC_NAMES = {0: "raw", 1: "fixed", 2: "huffman"}
COLLECTIVES = ("allreduce", "allgather", "alltoall", "broadcast")


def bus_factor(collective: str, ranks: int) -> float:
    if ranks == 1:
        return 1.0
    if collective == "allreduce":
        return 2 * (ranks - 1) / ranks
    if collective in ("allgather", "alltoall"):
        return (ranks - 1) / ranks
    return 1.0


@dataclass(frozen=True)
class QuantSpec:
    kind: str = "eb"  # eb, qsgd, none
    param: float = 1e-4

    @classmethod
    def parse(cls, text: str) -> "QuantSpec":
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind == "eb":
            return cls("eb", float(arg) if arg else 1e-4)
        if kind == "qsgd":
            return cls("qsgd", int(arg) if arg else 4)
        if kind == "none":
            return cls("none", 0)
        raise ValueError(f"unknown quantizer {text!r}")

    def __str__(self):
        if self.kind == "eb":
            return f"eb:{self.param:g}"
        if self.kind == "qsgd":
            return f"qsgd:{int(self.param)}"
        return "none"


@dataclass(frozen=True)
class ExperimentSpec:
    collective: str = "allreduce"
    ranks: int = 4
    sizes: tuple = (1 << 20,)
    codec: str = "auto"
    quant: QuantSpec = QuantSpec()
    net: NetworkModel = NetworkModel()
    overlap: OverlapMode = OverlapMode.PIPELINED
    distribution: Distribution = Distribution("gaussian")
    seed: int = 0
    max_batches_per_step: int = 4
    cost_model: str = "device"  # device or measured
    huffman_mode: str = "shared"
    inprimitive_threshold: int = INPRIMITIVE_THRESHOLD
    small_batch_threshold: int = 4096
    huff_threshold: int = 64 * 1024
    min_gain_permil: int = 50
    lam: float = 0.25  # exposed codec fraction assumed by arbitration when overlapped
    slot_bytes: int = SLOT_BYTES
    steps: int = STEPS

    def __post_init__(self):
        if self.collective not in COLLECTIVES:
            raise ValueError(f"collective must be one of {COLLECTIVES}")
        if self.ranks < 1:
            raise ValueError("ranks must be positive")
        if self.max_batches_per_step < 1:
            raise ValueError("max_batches_per_step must be positive")
        if any(s < 4 or s % 4 for s in self.sizes):
            raise ValueError("sizes must be positive multiples of 4 bytes")
        if isinstance(self.quant, str):
            object.__setattr__(self, "quant", QuantSpec.parse(self.quant))
        if isinstance(self.distribution, str):
            object.__setattr__(self, "distribution", Distribution.parse(self.distribution))
        if isinstance(self.overlap, str):
            object.__setattr__(self, "overlap", OverlapMode(self.overlap))
        _config(self, DEVICE_COSTS)  # validates the arbitration fields


@dataclass
class ReportRow:
    collective: str
    ranks: int
    size_bytes: int
    codec: str
    quant: str
    dist: str
    overlap: str
    regime: str
    bandwidth: float
    latency: float
    seed: int
    batches: int
    cr_quant: float
    cr_final: float
    cr_batch_std: float
    sim_time: float
    algbw: float
    busbw: float
    speedup_vs_raw: float
    exposed_codec_time: float
    codec_mix: str
    wall_time: float = field(default=0.0, metadata={"wall": True})


@dataclass
class _Sent:
    codec: int
    raw_bytes: int
    total_bytes: int
    float_bytes: int


class _Materializer:
    """Per-(rank, chunk, batch) inputs and their shared-scale symbols."""

    def __init__(self, spec: ExperimentSpec, count: int):
        self.spec = spec
        self.count = count
        self.file = None
        if spec.distribution.kind == "file":
            self.file = gen_data(spec.distribution, count)
        self._x = {}
        self._sym = {}
        self.scale = 1.0

    def values(self, rank, chunk, lo, hi, batch) -> np.ndarray:
        key = (rank, chunk, batch)
        if key not in self._x:
            if self.file is not None:
                self._x[key] = self.file[lo:hi]
            else:
                seed = (self.spec.seed, rank, chunk, batch)
                self._x[key] = gen_data(self.spec.distribution, hi - lo, seed)
        return self._x[key]

    def set_scale(self, keys):
        """Shared scale from every materialized input, as the pre-collective max-reduce."""
        q = self.spec.quant
        xs = [self._x[k] for k in keys]
        if q.kind == "eb":
            top = max((float(np.abs(x).max()) if x.size else 0.0) for x in xs)
            self.scale = 2.0 * q.param * top if top > 0 else 1.0
        elif q.kind == "qsgd":
            n = sum(x.size for x in xs)
            ss = sum(float(np.dot(x.astype(np.float64), x)) for x in xs) / max(n, 1)
            norm = math.sqrt(ss * self.count)  # one rank's full-vector L2 norm, extrapolated
            self.scale = norm if norm > 0 else 1.0

    def symbols(self, rank, chunk, batch) -> np.ndarray:
        key = (rank, chunk, batch)
        if key not in self._sym:
            x = self._x[key].astype(np.float64)
            q = self.spec.quant
            if q.kind == "eb":
                s = np.rint(x / self.scale)
            elif q.kind == "qsgd":
                rng = np.random.default_rng((self.spec.seed, 7, rank, chunk, batch))
                lv = np.abs(x) / self.scale * q.param
                base = np.floor(lv)
                s = np.sign(x) * (base + (rng.random(x.size) < lv - base))
            else:
                s = np.rint(x)
            self._sym[key] = s.astype(np.int64)
        return self._sym[key]


@dataclass
class _Step:
    """One ring step as seen by the tracked rank: which inputs each sent batch sums."""
    sources: list   # list of (rank, chunk)
    lo: int
    hi: int
    reduce: bool = False


def _steps(spec: ExperimentSpec, count: int) -> list[_Step]:
    n = spec.ranks
    if spec.collective == "allreduce":
        b = np.linspace(0, count, n + 1).astype(np.int64)
        out = []
        for s in range(n - 1):  # reduce-scatter at rank 0
            c = (-s) % n
            out.append(_Step([((-k) % n, c) for k in range(s + 1)], b[c], b[c + 1], True))
        for s in range(n - 1):
            c = (1 - s) % n
            out.append(_Step([(r, c) for r in range(n)], b[c], b[c + 1]))
        return out
    if spec.collective == "allgather":
        return [_Step([((-s) % n, 0)], 0, count) for s in range(n - 1)]
    if spec.collective == "alltoall":
        b = np.linspace(0, count, n + 1).astype(np.int64)
        return [_Step([(0, s)], b[s], b[s + 1]) for s in range(1, n)]
    return [_Step([(0, 0)], 0, count) for _ in range(n - 1)]  # broadcast hops


def _cost_table(spec: ExperimentSpec) -> dict:
    if spec.cost_model == "device":
        return dict(DEVICE_COSTS)
    if spec.cost_model == "measured":
        return measure_cost_model()
    raise ValueError(f"unknown cost model {spec.cost_model!r}")


def _config(spec: ExperimentSpec, costs: dict) -> ArbitrationConfig:
    lam = 1.0 if spec.overlap == OverlapMode.SERIALIZED else spec.lam
    return ArbitrationConfig(spec.small_batch_threshold, spec.huff_threshold,
                             spec.min_gain_permil, with_exposure(costs, lam), spec.codec,
                             spec.huffman_mode)


def _batch_spans(lo, hi, per):
    return [(s, min(s + per, hi)) for s in range(lo, hi, per)]


def build_plan(spec: ExperimentSpec, size_bytes: int, costs: dict | None = None,
               raw_baseline: bool = False):
    """Per-batch send plan of the tracked rank plus byte accounting."""
    costs = costs or _cost_table(spec)
    count = size_bytes // 4
    n = spec.ranks
    per = batch_raw_bytes(spec.steps, spec.slot_bytes) // 4
    mat = _Materializer(spec, count)
    steps = _steps(spec, count) if n > 1 else []
    k_max = spec.max_batches_per_step

    # which batches get built for real
    layout = []
    keys = set()
    for st in steps:
        spans = _batch_spans(st.lo, st.hi, per)
        distinct = list(range(min(k_max, len(spans))))
        if len(spans) > k_max and spans[-1][1] - spans[-1][0] < per:
            distinct.append(len(spans) - 1)
        layout.append((st, spans, distinct))
        for j in distinct:
            for rank, chunk in st.sources:
                mat.values(rank, chunk, spans[j][0], spans[j][1], j)
                keys.add((rank, chunk, j))
    codec = "raw" if raw_baseline else spec.codec
    gated = (spec.collective == "allreduce" and codec == "auto"
             and not inprimitive_enabled(size_bytes, spec.inprimitive_threshold))
    if gated:
        codec = "raw"
    cfg = replace(_config(spec, costs), codec=codec)
    calibrate = codec in ("auto", "huffman") and not cfg.embedded and steps
    calib = []
    if calibrate:  # each rank's leading batch of the first step
        st0, spans0, _ = layout[0]
        c0 = st0.sources[0][1]
        for rank in range(n):
            mat.values(rank, c0, spans0[0][0], spans0[0][1], 0)
            calib.append((rank, c0, 0))
            keys.add((rank, c0, 0))
    mat.set_scale(sorted(keys, key=str))

    ctx = None
    if calibrate:
        hist = np.ones(256, dtype=np.int64)
        for key in calib:
            window = mat.symbols(*key).astype(np.int32)[: cfg.sample_bytes // 4]
            hist += byte_histogram(symbol_bytes(window)[0])
        ctx = huffman_build_context(hist)

    stage = np.zeros(spec.steps * spec.slot_bytes, dtype=np.uint8)
    hint = spec.net.hint()
    plan: list[BatchPlan] = []
    sent: list[_Sent] = []
    distinct_cr = []
    prev_base = prev_nb = 0
    for si, (st, spans, distinct) in enumerate(layout):
        results = {}
        for j in distinct:
            total = sum(mat.symbols(r, c, j) for r, c in st.sources)
            wire = _wire(total)
            if raw_baseline or codec == "raw":
                res_codec, res_total = 0, wire.nbytes + HDR_BYTES
            else:
                res = encode_best(wire, stage, ctx, cfg, hint)
                if res.total_bytes == 0:
                    raise RuntimeError("staging capacity exhausted")
                res_codec, res_total = res.codec, res.total_bytes
            results[j] = (res_codec, wire.nbytes, res_total)
            distinct_cr.append((spans[j][1] - spans[j][0]) * 4 / res_total)
        rotation = [j for j in distinct if spans[j][1] - spans[j][0] == per] or distinct
        base = len(plan)
        for j, (lo, hi) in enumerate(spans):
            ref = j if j in results else rotation[j % len(rotation)]
            c, wire_bytes, total = results[ref]
            cost = costs[CodecId(c)]
            enc = 0.0 if c == 0 else cost.alpha + cost.encode_time(wire_bytes)
            dec = 0.0 if c == 0 else cost.decode_time(wire_bytes)
            red = wire_bytes / REDUCE_RATE if st.reduce else 0.0
            dep = None
            if spec.collective == "allreduce" and si > 0 and j < prev_nb:
                dep = prev_base + j
            plan.append(BatchPlan(wire_bytes, total, enc, dec, red, c, dep, 0.0, si))
            sent.append(_Sent(c, wire_bytes, total, (hi - lo) * 4))
        prev_base, prev_nb = base, len(spans)

    own = [k for k in sorted(keys, key=str) if k[0] == 0]
    return plan, sent, _cr_quant(mat, own), distinct_cr


def _cr_quant(mat, own) -> float:
    """Float bytes over the tracked rank's symbols at their narrowest integer width."""
    widths = [compact_itemsize(mat.symbols(*k)) for k in own]
    return 4.0 / max(widths) if widths else 1.0


def _wire(total: np.ndarray) -> np.ndarray:
    if total.size and np.abs(total).max() > np.iinfo(np.int32).max:
        return total
    return total.astype(np.int32)


def _broadcast_timeline(plan, net, mode, hops):
    """Chain the per-hop plans: hop h+1 may encode batch j once hop h decoded it."""
    per_hop = len(plan) // hops if hops else 0
    ready = None
    last = None
    for h in range(hops):
        hop = plan[h * per_hop:(h + 1) * per_hop]
        if ready is not None:
            hop = [replace(b, ready=ready[j]) for j, b in enumerate(hop)]
        last = run(hop, net, mode)
        ready = [r.dec_end for r in last.records]
    return last


def simulate(spec: ExperimentSpec, plan) -> tuple[float, float, object]:
    """(makespan, exposed codec time, timeline) for a plan."""
    if not plan:
        return 0.0, 0.0, None
    if spec.collective == "broadcast":
        tl = _broadcast_timeline(plan, spec.net, spec.overlap, spec.ranks - 1)
        bare = _broadcast_timeline([replace(b, enc_time=0.0, dec_time=0.0, red_time=0.0)
                                    for b in plan], spec.net, spec.overlap, spec.ranks - 1)
        return tl.makespan, tl.makespan - bare.makespan, tl
    tl = run(plan, spec.net, spec.overlap)
    return tl.makespan, exposed_codec_time(plan, spec.net, spec.overlap), tl


def run_size(spec: ExperimentSpec, size_bytes: int, costs=None, trace_path=None) -> ReportRow:
    t0 = time.perf_counter()
    costs = costs or _cost_table(spec)
    plan, sent, cr_quant, distinct_cr = build_plan(spec, size_bytes, costs)
    t_cfg, exposed, tl = simulate(spec, plan)
    if spec.codec == "raw":
        t_raw = t_cfg
    else:
        raw_plan, *_ = build_plan(spec, size_bytes, costs, raw_baseline=True)
        t_raw = simulate(spec, raw_plan)[0]
    if trace_path and tl is not None:
        write_timeline_csv(tl, trace_path)
    floats = sum(s.float_bytes for s in sent)
    frames = sum(s.total_bytes for s in sent)
    cr_final = floats / frames if frames else 1.0
    mix = Counter(CODEC_NAMES[s.codec] for s in sent)
    algbw = size_bytes / t_cfg if t_cfg > 0 else math.inf
    return ReportRow(
        spec.collective, spec.ranks, size_bytes, spec.codec, str(spec.quant),
        str(spec.distribution), spec.overlap.value, spec.net.regime.value,
        spec.net.bandwidth, spec.net.latency, spec.seed, len(sent), cr_quant, cr_final,
        float(np.std(distinct_cr)) if distinct_cr else 0.0, t_cfg, algbw,
        algbw * bus_factor(spec.collective, spec.ranks),
        t_raw / t_cfg if t_cfg > 0 else 1.0, exposed,
        ";".join(f"{k}:{mix[k]}" for k in ("raw", "fixed", "huffman") if mix[k]),
        time.perf_counter() - t0)


def run_experiment(spec: ExperimentSpec, trace_prefix=None) -> list[ReportRow]:
    """One row per message size, sizes in the order given."""
    costs = _cost_table(spec)
    rows = []
    for size in spec.sizes:
        trace = f"{trace_prefix}_{size}.csv" if trace_prefix else None
        rows.append(run_size(spec, size, costs, trace))
    return rows


def default_net(regime: str = "inter", bandwidth: float | None = None,
                latency: float = 5e-6) -> NetworkModel:
    if Regime(regime) == Regime.INTRA_NODE:
        return NetworkModel.intra(bandwidth or 200 * GiB, latency)
    return NetworkModel.inter(bandwidth or 10 * GiB, latency)
