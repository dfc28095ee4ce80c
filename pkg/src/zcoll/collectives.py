"""Ring collectives over simulated channels.

Every rank runs in its own thread and talks to its ring neighbours through
:class:`~zcoll.transport.Channel` FIFOs. Messages are split into 8-slot
batches; each batch is arbitrated and encoded on send and validated and
decoded on receive. Only symbols travel, the reduction is integer addition,
and every in-path codec is lossless, so outputs do not depend on the codec.

Typical driver use::

    comm = Communicator(4, cfg=ArbitrationConfig(codec="auto"))
    outs = comm.allreduce([x0, x1, x2, x3], quant="eb", rel=1e-4)
"""
from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .codec import (HDR_BYTES, HuffmanContext, byte_histogram, decode_frame, frame_commit_raw,
                    huffman_build_context, symbol_bytes)
from .quant import (QuantizedStream, dequantize_symbols, eb_quantize, prequantized,
                    qsgd_quantize, requantize)
from .rea import ArbitrationConfig, encode_best
from .transport import (DEFAULT_TIMEOUT, SLOT_BYTES, STEPS, Channel, NetworkModel,
                        TransportError, batch_raw_bytes)

INT32_MAX = np.iinfo(np.int32).max
INT64_MAX = np.iinfo(np.int64).max
_META = struct.Struct("<QB3x")  # element count, dtype code
_DTYPES = [np.dtype(t) for t in ("i1", "i2", "i4", "i8", "u1", "u2", "u4", "u8",
                                 "f2", "f4", "f8")]
_WIRE_INT = {1: np.dtype(np.int8), 2: np.dtype(np.int16), 4: np.dtype(np.int32),
             8: np.dtype(np.int64)}


class StagingCapacityError(RuntimeError):
    """Not even a RAW frame fits the staging bank."""


class CollectiveOp(enum.Enum):
    ALLREDUCE = "allreduce"
    ALLGATHER = "allgather"
    ALLTOALL = "alltoall"
    BROADCAST = "broadcast"


@dataclass
class CollectiveRequest:
    op: CollectiveOp
    payload: object  # float array, QuantizedStream, or list of arrays for alltoall
    root: int = 0
    quant: str = "none"
    quant_params: dict = field(default_factory=dict)
    group_id: int = 0


@dataclass(frozen=True)
class FrameStat:
    peer: int
    direction: str  # "send" or "recv"
    codec: int
    raw_bytes: int
    total_bytes: int
    fell_back: bool = False


def _wire_view(arr: np.ndarray) -> np.ndarray:
    """Same bytes, reinterpreted as a signed integer stream for the codecs."""
    arr = np.ascontiguousarray(arr)
    wire = _WIRE_INT[arr.dtype.itemsize]
    return arr.view(wire).reshape(-1)


class RankComm:
    """One rank's view of the communicator; all methods run on that rank's thread."""

    def __init__(self, comm: "Communicator", rank: int):
        self.comm = comm
        self.rank = rank
        self.ranks = comm.ranks
        self.cfg = comm.cfg
        self.huff_ctx = comm._shared_ctx
        self.stats: list[FrameStat] = []
        self.plan_log: list = []
        self.batch_elems_override = None

    @property
    def next(self) -> int:
        return (self.rank + 1) % self.ranks

    @property
    def prev(self) -> int:
        return (self.rank - 1 + self.ranks) % self.ranks

    # -- batch primitives ----------------------------------------------------

    def _send_batch(self, peer: int, sym: np.ndarray, raw_only: bool = False):
        ch = self.comm.channel(self.rank, peer)
        _, stage = ch.acquire_bank()
        ch.wait_slots_free(ch.steps)
        if raw_only:
            total = frame_commit_raw(sym, stage)
            res_codec = 0
        else:
            res = encode_best(sym, stage, self.huff_ctx, self.cfg, self.comm.net.hint(),
                              self.plan_log)
            total, res_codec = res.total_bytes, res.codec
        if total == 0:
            raise StagingCapacityError(f"{sym.nbytes}-byte batch does not fit staging")
        ch.enqueue_frame(stage, total)
        self.stats.append(FrameStat(peer, "send", res_codec, sym.nbytes, total))

    def _recv_batch(self, peer: int, raw_bytes: int, dtype) -> np.ndarray:
        ch = self.comm.channel(peer, self.rank)
        with ch.dequeue_frame() as frame:
            # drain into a private bank so the slots free before decode starts
            region = frame.region.copy()
            total = frame.total_bytes
        sym, fell_back = decode_frame(region, raw_bytes, dtype, self.huff_ctx)
        codec = int(region[5]) if total >= HDR_BYTES else 0
        self.stats.append(FrameStat(peer, "recv", codec, raw_bytes, total, fell_back))
        return sym

    def _batch_elems(self, itemsize: int) -> int:
        if self.batch_elems_override:
            return self.batch_elems_override
        return self.comm.batch_raw // itemsize

    def _spans(self, count: int, itemsize: int):
        per = self._batch_elems(itemsize)
        return [(s, min(s + per, count)) for s in range(0, count, per)]

    def _send_meta(self, peer, arr):
        meta = np.frombuffer(_META.pack(arr.size, _DTYPES.index(arr.dtype)), dtype=np.uint8)
        self._send_batch(peer, meta, raw_only=True)

    def _recv_meta(self, peer):
        raw = self._recv_batch(peer, _META.size, np.uint8)
        count, code = _META.unpack(raw.tobytes())
        if code >= len(_DTYPES):
            raise TransportError(f"bad dtype code {code} in message header")
        return int(count), _DTYPES[code]

    # -- message primitives ---------------------------------------------------

    def send_encoded(self, peer: int, arr: np.ndarray):
        """Send ``arr`` as a header frame followed by per-batch encoded frames."""
        arr = np.ascontiguousarray(arr).reshape(-1)
        self._send_meta(peer, arr)
        wire = _wire_view(arr)
        for s, e in self._spans(wire.size, wire.itemsize):
            self._send_batch(peer, wire[s:e])

    def recv_decoded(self, peer: int) -> np.ndarray:
        count, dtype = self._recv_meta(peer)
        wire = _WIRE_INT[dtype.itemsize]
        out = np.empty(count, dtype=wire)
        for s, e in self._spans(count, wire.itemsize):
            out[s:e] = self._recv_batch(peer, (e - s) * wire.itemsize, wire)
        return out.view(dtype)

    def sendrecv(self, send_peer: int, arr: np.ndarray, recv_peer: int) -> np.ndarray:
        """Exchange with batch interleaving, so one-batch FIFOs cannot deadlock a ring."""
        arr = np.ascontiguousarray(arr).reshape(-1)
        self._send_meta(send_peer, arr)
        count, dtype = self._recv_meta(recv_peer)
        wire = _wire_view(arr)
        sends = self._spans(wire.size, wire.itemsize)
        rwire = _WIRE_INT[dtype.itemsize]
        recvs = self._spans(count, rwire.itemsize)
        out = np.empty(count, dtype=rwire)
        for k in range(max(len(sends), len(recvs))):
            if k < len(sends):
                s, e = sends[k]
                self._send_batch(send_peer, wire[s:e])
            if k < len(recvs):
                s, e = recvs[k]
                out[s:e] = self._recv_batch(recv_peer, (e - s) * rwire.itemsize, rwire)
        return out.view(dtype)

    # -- small RAW control exchange ---------------------------------------------

    def raw_allgather_small(self, values) -> np.ndarray:
        """Ring allgather of a short vector, always framed RAW; returns (ranks, n)."""
        vec = np.atleast_1d(np.asarray(values)).reshape(-1)
        out = np.empty((self.ranks, vec.size), dtype=vec.dtype)
        out[self.rank] = vec
        cur = vec
        for s in range(self.ranks - 1):
            self._send_batch(self.next, _wire_view(cur), raw_only=True)
            got = self._recv_batch(self.prev, cur.nbytes, _WIRE_INT[vec.itemsize])
            cur = got.view(vec.dtype)
            out[(self.rank - s - 1) % self.ranks] = cur
        return out

    def calibrate_huffman(self, sym: np.ndarray | None) -> HuffmanContext:
        """Agree on a shared codebook from every rank's leading sample.

        Collective: every rank must call it; ranks without data pass ``None``.
        """
        local = np.zeros(256, dtype=np.int64)
        if sym is not None and sym.size:
            window = sym[: max(1, self.cfg.sample_bytes // sym.itemsize)]
            local += byte_histogram(symbol_bytes(window)[0]).astype(np.int64)
        hist = self.raw_allgather_small(local).sum(axis=0) + 1
        self.huff_ctx = huffman_build_context(hist)
        return self.huff_ctx

    def _maybe_calibrate(self, sym: np.ndarray | None):
        if (self.huff_ctx is None and self.comm.calibrate
                and self.cfg.codec in ("auto", "huffman") and not self.cfg.embedded):
            self.calibrate_huffman(None if sym is None else _wire_view(sym))
            if self.rank == 0:
                self.comm._shared_ctx = self.huff_ctx

    # -- collectives -------------------------------------------------------------

    def ring_allreduce(self, q: QuantizedStream) -> np.ndarray:
        """Sum of every rank's symbols, dequantized with the (shared) scale."""
        return dequantize_symbols(self.allreduce_symbols(q.symbols), q.meta)

    def allreduce_symbols(self, symbols, wire_dtype=None) -> np.ndarray:
        """Integer-sum ring allreduce; int64 accumulators, narrow wire symbols."""
        acc = np.asarray(symbols).astype(np.int64).reshape(-1)
        n = self.ranks
        if wire_dtype is None:
            maxabs = int(np.abs(acc).max()) if acc.size else 0
            top = int(self.raw_allgather_small(np.array([maxabs], np.int64)).max())
            wire_dtype = _sum_wire_dtype(top, n)
        if n == 1:
            return acc
        self._maybe_calibrate(acc.astype(wire_dtype))
        bounds = np.linspace(0, acc.size, n + 1).astype(np.int64)
        chunk = [slice(bounds[i], bounds[i + 1]) for i in range(n)]
        r = self.rank
        for s in range(n - 1):  # reduce-scatter: recv, decode, add, re-encode, send
            si, ri = (r - s) % n, (r - s - 1) % n
            got = self.sendrecv(self.next, acc[chunk[si]].astype(wire_dtype), self.prev)
            acc[chunk[ri]] += got.astype(np.int64)
        for s in range(n - 1):  # allgather: recv, decode, copy, re-encode, send
            si, ri = (r - s + 1) % n, (r - s) % n
            got = self.sendrecv(self.next, acc[chunk[si]].astype(wire_dtype), self.prev)
            acc[chunk[ri]] = got.astype(np.int64)
        return acc

    def allreduce(self, x, quant: str = "eb", rng_seed=None, **params) -> np.ndarray:
        """Quantize locally, agree on a shared scale, then integer ring allreduce."""
        q = local_quantize(x, quant, rng_seed=rng_seed, **params)
        if quant in ("eb", "qsgd"):
            scale = float(self.raw_allgather_small(np.array([q.meta.scale])).max())
            seed = None if rng_seed is None else rng_seed
            q = requantize(q, x, scale, rng_seed=seed)
        return self.ring_allreduce(q)

    def ring_allgather(self, arr) -> list:
        """Every rank's array, in rank order, bit-exact."""
        if isinstance(arr, QuantizedStream):
            arr = arr.symbols
        arr = np.ascontiguousarray(arr).reshape(-1)
        self._maybe_calibrate(arr)
        out = [None] * self.ranks
        out[self.rank] = arr.copy()
        cur = arr
        for s in range(self.ranks - 1):
            cur = self.sendrecv(self.next, cur, self.prev)
            out[(self.rank - s - 1) % self.ranks] = cur
        return out

    def alltoall(self, chunks) -> list:
        """Chunk ``j`` of rank ``i`` lands as chunk ``i`` of rank ``j``."""
        if len(chunks) != self.ranks:
            raise ValueError(f"need {self.ranks} chunks, got {len(chunks)}")
        chunks = [np.ascontiguousarray(c).reshape(-1) for c in chunks]
        self._maybe_calibrate(chunks[(self.rank + 1) % self.ranks])
        out = [None] * self.ranks
        out[self.rank] = chunks[self.rank].copy()
        for s in range(1, self.ranks):
            dst, src = (self.rank + s) % self.ranks, (self.rank - s) % self.ranks
            out[src] = self.sendrecv(dst, chunks[dst], src)
        return out

    def broadcast(self, data, root: int = 0) -> np.ndarray:
        """Ring forwarding from ``root``; non-root ``data`` is ignored."""
        if self.ranks == 1:
            return np.ascontiguousarray(data).reshape(-1).copy()
        if self.rank == root:
            arr = np.ascontiguousarray(data).reshape(-1)
            self._maybe_calibrate(arr)
            self.send_encoded(self.next, arr)
            return arr.copy()
        self._maybe_calibrate(None)
        count, dtype = self._recv_meta(self.prev)
        forward = self.next != root
        if forward:
            self._send_meta(self.next, np.empty(count, dtype))
        wire = _WIRE_INT[dtype.itemsize]
        out = np.empty(count, dtype=wire)
        for s, e in self._spans(count, wire.itemsize):
            out[s:e] = self._recv_batch(self.prev, (e - s) * wire.itemsize, wire)
            if forward:
                self._send_batch(self.next, out[s:e])
        return out.view(dtype)

    def execute(self, req: CollectiveRequest):
        if req.op == CollectiveOp.ALLREDUCE:
            if isinstance(req.payload, QuantizedStream):
                return self.ring_allreduce(req.payload)
            return self.allreduce(req.payload, req.quant, **req.quant_params)
        if req.op == CollectiveOp.ALLGATHER:
            p = req.payload.symbols if isinstance(req.payload, QuantizedStream) else req.payload
            return self.ring_allgather(p)
        if req.op == CollectiveOp.ALLTOALL:
            return self.alltoall(req.payload)
        if req.op == CollectiveOp.BROADCAST:
            return self.broadcast(req.payload, req.root)
        raise ValueError(f"unsupported op {req.op!r}")

    def group_execute(self, requests) -> list:
        """Run a queued group in submission order on this rank."""
        return [self.execute(r) for r in requests]


def _sum_wire_dtype(maxabs: int, ranks: int) -> np.dtype:
    bound = maxabs * ranks
    if bound <= INT32_MAX:
        return np.dtype(np.int32)
    if bound <= INT64_MAX:
        return np.dtype(np.int64)
    raise OverflowError(f"symbol sum bound {bound} exceeds 64-bit range")


def local_quantize(x, quant: str = "eb", rng_seed=None, **params) -> QuantizedStream:
    if isinstance(x, QuantizedStream):
        return x
    if quant == "eb":
        return eb_quantize(x, params.get("rel", 1e-4), params.get("scale"))
    if quant == "qsgd":
        return qsgd_quantize(x, params.get("levels", 4), rng_seed=rng_seed,
                             scale=params.get("scale"))
    if quant == "none":
        return prequantized(x)
    raise ValueError(f"unknown quantizer {quant!r}")


def shared_scale_oracle(xs, quant: str = "eb", seeds=None, **params):
    """Serial reference: per-rank streams at the max local scale, and their dequantized sum."""
    seeds = seeds or [None] * len(xs)
    qs = [local_quantize(x, quant, rng_seed=s, **params) for x, s in zip(xs, seeds)]
    if quant in ("eb", "qsgd"):
        scale = max(q.meta.scale for q in qs)
        qs = [requantize(q, x, scale, rng_seed=s) for q, x, s in zip(qs, xs, seeds)]
    total = np.sum([q.symbols.astype(np.int64) for q in qs], axis=0)
    return qs, dequantize_symbols(total, qs[0].meta)


class Communicator:
    """A group of ``ranks`` endpoints connected by lazily created channels."""

    def __init__(self, ranks: int, cfg: ArbitrationConfig | None = None,
                 net: NetworkModel | None = None, huff_ctx: HuffmanContext | None = None,
                 calibrate: bool = True, slot_bytes: int = SLOT_BYTES, steps: int = STEPS,
                 timeout: float = DEFAULT_TIMEOUT):
        if ranks < 1:
            raise ValueError("need at least one rank")
        self.ranks = ranks
        self.cfg = cfg or ArbitrationConfig()
        self.net = net or NetworkModel()
        self.calibrate = calibrate
        self.slot_bytes = slot_bytes
        self.steps = steps
        self.timeout = timeout
        self.batch_raw = batch_raw_bytes(steps, slot_bytes)
        self._shared_ctx = huff_ctx
        self._channels: dict[tuple[int, int], Channel] = {}
        self._lock = threading.Lock()
        self.last_ranks: list[RankComm] = []

    @property
    def huff_ctx(self):
        return self._shared_ctx

    def channel(self, src: int, dst: int) -> Channel:
        with self._lock:
            ch = self._channels.get((src, dst))
            if ch is None:
                ch = Channel(self.net, self.slot_bytes, self.steps, self.timeout)
                self._channels[(src, dst)] = ch
            return ch

    def run(self, fn) -> list:
        """Call ``fn(rank_comm)`` on every rank concurrently; return per-rank results."""
        views = [RankComm(self, r) for r in range(self.ranks)]
        results = [None] * self.ranks
        errors = []

        def worker(view):
            try:
                results[view.rank] = fn(view)
            except BaseException as exc:  # noqa: BLE001 - re-raised on the driver
                errors.append(exc)
                for ch in list(self._channels.values()):
                    ch.close()

        threads = [threading.Thread(target=worker, args=(v,), daemon=True) for v in views]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        self.last_ranks = views
        if errors:
            self._channels.clear()
            primary = [e for e in errors if not isinstance(e, TransportError)]
            raise (primary or errors)[0]
        return results

    # -- driver-side conveniences ----------------------------------------------

    def allreduce(self, xs, quant: str = "eb", seeds=None, **params) -> list:
        seeds = seeds or [None] * self.ranks
        return self.run(lambda rc: rc.allreduce(xs[rc.rank], quant, rng_seed=seeds[rc.rank],
                                                **params))

    def allreduce_streams(self, qs) -> list:
        return self.run(lambda rc: rc.ring_allreduce(qs[rc.rank]))

    def allgather(self, arrays) -> list:
        return self.run(lambda rc: rc.ring_allgather(arrays[rc.rank]))

    def alltoall(self, send_chunks) -> list:
        return self.run(lambda rc: rc.alltoall(send_chunks[rc.rank]))

    def broadcast(self, data, root: int = 0) -> list:
        return self.run(lambda rc: rc.broadcast(data if rc.rank == root else None, root))

    def group(self, requests_per_rank) -> list:
        return self.run(lambda rc: rc.group_execute(requests_per_rank[rc.rank]))

    def frame_stats(self) -> list:
        return [v.stats for v in self.last_ranks]
