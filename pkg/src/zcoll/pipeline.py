"""Overlap scheduling on the simulated clock.

A send plan is a list of batches in FIFO order. Each batch is encoded into
one of two staging banks, waits for FIFO slots, crosses the link, and is
decoded (then optionally reduced) at the receiver. In pipelined mode the
encoder, link, decoder and reducer are independent in-order units, so batch
``i+1`` encodes while batch ``i`` is on the wire and the receiver decodes
batch ``i`` while ``i+1`` arrives. Serialized mode runs every stage of every
batch back to back.

Every resource processes batches in plan order, so start times follow from a
max-plus recurrence; no event queue is needed.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, fields, replace

from .transport import NetworkModel, SLOT_BYTES, STEPS

MiB = 1 << 20
INPRIMITIVE_THRESHOLD = 4 * MiB
STAGGER_DEPTH = 3


class OverlapMode(enum.Enum):
    PIPELINED = "on"
    SERIALIZED = "off"


@dataclass(frozen=True)
class BatchPlan:
    raw_bytes: int
    total_bytes: int
    enc_time: float = 0.0
    dec_time: float = 0.0
    red_time: float = 0.0
    codec: int = 0
    dep: int | None = None  # batch whose reduce must finish before this encode
    ready: float = 0.0      # external earliest encode start
    step: int = 0


@dataclass
class BatchRecord:
    batch: int
    step: int
    codec: int
    raw_bytes: int
    total_bytes: int
    enc_start: float
    enc_end: float
    enqueue: float
    link_done: float
    dec_start: float
    dec_end: float
    red_start: float
    red_end: float
    link_start: float = 0.0


TIMELINE_COLUMNS = [f.name for f in fields(BatchRecord) if f.name != "link_start"]


@dataclass
class BatchTimeline:
    records: list = field(default_factory=list)
    mode: OverlapMode = OverlapMode.PIPELINED

    @property
    def makespan(self) -> float:
        return max((r.red_end for r in self.records), default=0.0)

    @property
    def codec_time(self) -> float:
        return sum((r.enc_end - r.enc_start) + (r.dec_end - r.dec_start) for r in self.records)

    def check(self):
        """Assert the happens-before contract and FIFO link ordering."""
        prev = None
        for r in self.records:
            assert r.enc_start <= r.enc_end <= r.enqueue <= r.link_start < r.link_done or (
                r.total_bytes == 0), r
            assert r.link_done <= r.dec_start <= r.dec_end <= r.red_start <= r.red_end, r
            if prev is not None:
                assert prev.link_done <= r.link_done, (prev, r)
            prev = r
        return self


def _fifo_depth(slots: int, steps: int) -> int:
    if slots < 1 or steps % slots:
        raise ValueError("slots per frame must divide the slot count")
    return steps // slots


def run_pipelined(plan, net: NetworkModel, slots_per_frame: int = STEPS,
                  steps: int = STEPS, banks: int = 2) -> BatchTimeline:
    depth = _fifo_depth(slots_per_frame, steps)
    recs: list[BatchRecord] = []
    enc_free = link_free = dec_free = red_free = 0.0
    for i, b in enumerate(plan):
        start = max(enc_free, b.ready)
        if b.dep is not None:
            start = max(start, recs[b.dep].red_end)
        if i >= banks:
            # staging bank reused only after its previous frame has landed
            start = max(start, recs[i - banks].link_done)
        enc_end = start + b.enc_time
        enqueue = enc_end
        if i >= depth:
            enqueue = max(enqueue, recs[i - depth].dec_start)  # slots free once drained
        link_start = max(enqueue, link_free)
        link_free = link_start + net.wire_time(b.total_bytes)
        link_done = link_start + net.transfer_time(b.total_bytes)
        dec_start = max(link_done, dec_free)
        dec_end = dec_free = dec_start + b.dec_time
        red_start = max(dec_end, red_free)
        red_end = red_free = red_start + b.red_time
        enc_free = enc_end
        recs.append(BatchRecord(i, b.step, b.codec, b.raw_bytes, b.total_bytes, start, enc_end,
                                enqueue, link_done, dec_start, dec_end, red_start, red_end,
                                link_start))
    for i in range(banks, len(recs)):
        if recs[i].enc_start < recs[i - banks].link_done:
            raise AssertionError(f"batch {i} writes bank {i % banks} while in flight")
    return BatchTimeline(recs, OverlapMode.PIPELINED)


def run_serialized(plan, net: NetworkModel, **_) -> BatchTimeline:
    recs: list[BatchRecord] = []
    t = 0.0
    for i, b in enumerate(plan):
        start = max(t, b.ready)
        if b.dep is not None:
            start = max(start, recs[b.dep].red_end)
        enc_end = start + b.enc_time
        link_done = enc_end + net.transfer_time(b.total_bytes)
        dec_end = link_done + b.dec_time
        red_end = dec_end + b.red_time
        recs.append(BatchRecord(i, b.step, b.codec, b.raw_bytes, b.total_bytes, start, enc_end,
                                enc_end, link_done, link_done, dec_end, dec_end, red_end,
                                enc_end))
        t = red_end
    return BatchTimeline(recs, OverlapMode.SERIALIZED)


def run(plan, net: NetworkModel, mode: OverlapMode = OverlapMode.PIPELINED, **kw):
    if mode == OverlapMode.PIPELINED:
        return run_pipelined(plan, net, **kw)
    return run_serialized(plan, net, **kw)


def transfer_only(plan) -> list:
    return [replace(b, enc_time=0.0, dec_time=0.0, red_time=0.0) for b in plan]


def exposed_codec_time(plan, net: NetworkModel, mode=OverlapMode.PIPELINED, **kw) -> float:
    """Makespan minus the makespan of the same plan with free codecs."""
    full = run(plan, net, mode, **kw).makespan
    bare = run(transfer_only(plan), net, mode, **kw).makespan
    return full - bare


def write_timeline_csv(timeline: BatchTimeline, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMELINE_COLUMNS)
        for r in timeline.records:
            w.writerow([getattr(r, c) for c in TIMELINE_COLUMNS])


# -- in-primitive stagger -----------------------------------------------------

def inprimitive_enabled(message_bytes: int, threshold: int = INPRIMITIVE_THRESHOLD) -> bool:
    return message_bytes >= threshold


@dataclass(frozen=True)
class RingStep:
    """One fused recv-decode-reduce-encode-send step over ``len(arrival)`` chunks."""
    arrival: tuple
    dec: tuple
    red: tuple
    enc: tuple
    send: tuple
    message_bytes: int = INPRIMITIVE_THRESHOLD


@dataclass
class StepSchedule:
    intervals: list  # per chunk: {"decode": (s, e), "reduce": ..., "encode": ..., "send": ...}
    raw: bool = False

    @property
    def makespan(self) -> float:
        return max((iv["send"][1] for iv in self.intervals), default=0.0)


def stagger_chunks(step: RingStep, staggered: bool = True,
                   threshold: int = INPRIMITIVE_THRESHOLD) -> StepSchedule:
    """Schedule a fused step; staggering lets decode(k+1), reduce(k), encode(k-1) overlap.

    Below ``threshold`` the step runs RAW: no codec work, chunks pass straight through.
    """
    n = len(step.arrival)
    raw = not inprimitive_enabled(step.message_bytes, threshold)
    dec = [0.0] * n if raw else list(step.dec)
    enc = [0.0] * n if raw else list(step.enc)
    out = []
    dfree = rfree = efree = sfree = 0.0
    for k in range(n):
        s = max(step.arrival[k], dfree)
        if not staggered and k:
            s = max(s, out[k - 1]["send"][1])
        if staggered and k >= STAGGER_DEPTH:
            s = max(s, out[k - STAGGER_DEPTH]["encode"][1])
        d = (s, s + dec[k])
        r0 = max(d[1], rfree)
        r = (r0, r0 + step.red[k])
        e0 = max(r[1], efree)
        e = (e0, e0 + enc[k])
        s0 = max(e[1], sfree)
        snd = (s0, s0 + step.send[k])
        dfree, rfree, efree, sfree = d[1], r[1], e[1], snd[1]
        out.append({"recv": (step.arrival[k], step.arrival[k]), "decode": d, "reduce": r,
                    "encode": e, "send": snd})
    return StepSchedule(out, raw)


def slot_frame_plan(message_bytes: int, per_slot: bool, slot_bytes: int = SLOT_BYTES,
                    steps: int = STEPS, header: int = 32) -> tuple[list, int]:
    """RAW frames for a message at 8-slot or single-slot granularity."""
    frame_slots = 1 if per_slot else steps
    span = frame_slots * slot_bytes - header
    plan = []
    left = message_bytes
    while left > 0:
        n = min(span, left)
        plan.append(BatchPlan(n, n + header))
        left -= n
    return plan, frame_slots
