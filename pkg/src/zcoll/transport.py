"""Simulated inter-rank transport.

Each directed connection is a single-producer single-consumer FIFO of
``steps`` slots of ``slot_bytes`` each, with blocking backpressure, two
ping-pong staging banks on the sender side, and a latency/bandwidth link
model that charges only the bytes actually enqueued.
"""
from __future__ import annotations

import csv
import enum
import threading
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .codec.frame import HDR_BYTES

SLOT_BYTES = 512 * 1024
STEPS = 8
GiB = 1 << 30
DEFAULT_TIMEOUT = 120.0


class Regime(enum.Enum):
    INTRA_NODE = "intra"
    INTER_NODE = "inter"


class TransportError(RuntimeError):
    """Peer disconnected or the wait timed out."""


@dataclass(frozen=True)
class TransportHint:
    regime: Regime
    beta_eff: float

    def __post_init__(self):
        if not self.beta_eff > 0:
            raise ValueError("beta_eff must be positive")


@dataclass(frozen=True)
class NetworkModel:
    latency: float = 5e-6
    bandwidth: float = 10 * GiB
    regime: Regime = Regime.INTER_NODE

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")

    @classmethod
    def inter(cls, bandwidth=10 * GiB, latency=5e-6):
        return cls(latency, bandwidth, Regime.INTER_NODE)

    @classmethod
    def intra(cls, bandwidth=200 * GiB, latency=5e-6):
        return cls(latency, bandwidth, Regime.INTRA_NODE)

    def transfer_time(self, nbytes: int) -> float:
        return self.latency + nbytes / self.bandwidth

    def wire_time(self, nbytes: int) -> float:
        """Link occupancy; back-to-back messages overlap their latency."""
        return nbytes / self.bandwidth

    def hint(self) -> TransportHint:
        return TransportHint(self.regime, self.bandwidth)


def transfer_time(model: NetworkModel, nbytes: int) -> float:
    return model.transfer_time(nbytes)


def batch_raw_bytes(steps: int = STEPS, slot_bytes: int = SLOT_BYTES) -> int:
    """Largest raw span whose RAW frame still fits the FIFO."""
    return steps * slot_bytes - HDR_BYTES


@dataclass
class TraceRow:
    batch: int
    total_bytes: int
    slots: int
    enqueue_time: float
    link_done_time: float
    dequeue_time: float = float("nan")


@dataclass
class _Pending:
    batch: int
    offset: int
    total_bytes: int
    slots: int
    bank: int


class Channel:
    """One directed connection (``ChannelState``).

    Sender: :meth:`acquire_bank`, :meth:`wait_slots_free`, :meth:`enqueue_frame`.
    Receiver: ``with ch.dequeue_frame() as frame:`` releases the slots on exit.
    """

    def __init__(self, net: NetworkModel | None = None, slot_bytes=SLOT_BYTES, steps=STEPS,
                 timeout=DEFAULT_TIMEOUT):
        self.net = net or NetworkModel()
        self.slot_bytes = slot_bytes
        self.steps = steps
        self.timeout = timeout
        self.head = 0  # slots produced
        self.tail = 0  # slots consumed
        self.batch_id = 0
        self.closed = False
        self._buffer = None
        self._staging = [None, None]
        self._bank_busy = [False, False]
        self._fifo: deque[_Pending] = deque()
        self._cv = threading.Condition()
        self.link_free = 0.0
        self.trace: list[TraceRow] = []
        self.max_outstanding = 0

    @property
    def capacity(self) -> int:
        return self.steps * self.slot_bytes

    @property
    def outstanding(self) -> int:
        return self.head - self.tail

    def _buf(self):
        if self._buffer is None:
            # calloc-backed, pages materialize on first touch
            self._buffer = np.zeros(self.capacity, dtype=np.uint8)
        return self._buffer

    def _wait(self, pred):
        if not self._cv.wait_for(lambda: self.closed or pred(), timeout=self.timeout):
            raise TransportError("timed out waiting on peer")
        if self.closed and not pred():
            raise TransportError("connection closed")

    def close(self):
        with self._cv:
            self.closed = True
            self._cv.notify_all()

    # -- sender ---------------------------------------------------------

    def acquire_bank(self) -> tuple[int, np.ndarray]:
        """Staging bank for the next batch, alternating by batch id."""
        with self._cv:
            bank = self.batch_id % 2
            if self._bank_busy[bank]:
                raise AssertionError(f"staging bank {bank} rewritten while in flight")
            if self._staging[bank] is None:
                self._staging[bank] = np.zeros(self.capacity, dtype=np.uint8)
            return bank, self._staging[bank]

    def wait_slots_free(self, k: int | None = None):
        k = self.steps if k is None else k
        if k > self.steps:
            raise ValueError(f"cannot wait for {k} of {self.steps} slots")
        with self._cv:
            self._wait(lambda: self.steps - self.outstanding >= k)

    def enqueue_frame(self, frame, total_bytes: int, slots: int | None = None,
                      ready_time: float | None = None) -> float:
        """Publish ``frame[:total_bytes]``; returns the simulated link completion time."""
        slots = self.steps if slots is None else slots
        if total_bytes <= 0:
            raise ValueError("refusing to enqueue an empty frame")
        if total_bytes > slots * self.slot_bytes:
            raise ValueError(f"frame of {total_bytes} bytes exceeds {slots} slots")
        if self.steps % slots:
            raise ValueError("slots per frame must divide the slot count")
        src = np.asarray(frame, dtype=np.uint8).reshape(-1)[:total_bytes]
        with self._cv:
            self._wait(lambda: self.steps - self.outstanding >= slots)
            offset = (self.head % self.steps) * self.slot_bytes
            self._buf()[offset:offset + total_bytes] = src
            bank = self.batch_id % 2
            self._bank_busy[bank] = True
            self._fifo.append(_Pending(self.batch_id, offset, total_bytes, slots, bank))
            self.head += slots
            self.max_outstanding = max(self.max_outstanding, self.outstanding)
            t0 = self.link_free if ready_time is None else max(ready_time, self.link_free)
            self.link_free = t0 + self.net.wire_time(total_bytes)
            done = t0 + self.net.transfer_time(total_bytes)
            self.trace.append(TraceRow(self.batch_id, total_bytes, slots, t0, done))
            self.batch_id += 1
            self._cv.notify_all()
            return done

    # -- receiver -------------------------------------------------------

    @contextmanager
    def dequeue_frame(self):
        """Yield the oldest frame's slot region (a view into the ring buffer).

        The view spans the frame's slots, so reads past ``total_bytes`` see
        whatever the buffer last held there.
        """
        with self._cv:
            self._wait(lambda: bool(self._fifo))
            item = self._fifo[0]
        region = self._buf()[item.offset:item.offset + item.slots * self.slot_bytes]
        try:
            yield RecvFrame(region, item.total_bytes, item.batch)
        finally:
            with self._cv:
                self._fifo.popleft()
                self.tail += item.slots
                self._bank_busy[item.bank] = False
                row = self.trace[item.batch]
                row.dequeue_time = row.link_done_time
                self._cv.notify_all()


@dataclass
class RecvFrame:
    region: np.ndarray
    total_bytes: int
    batch: int


def write_trace_csv(rows, path):
    cols = ["batch", "total_bytes", "slots", "enqueue_time", "link_done_time", "dequeue_time"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([getattr(r, c) for c in cols])
