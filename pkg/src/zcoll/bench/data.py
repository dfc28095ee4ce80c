"""Synthetic inputs and float-file ingestion."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Distribution:
    kind: str  # uniform, gaussian, geometric, file
    p: float = 0.5
    path: str | None = None

    @classmethod
    def parse(cls, text: str) -> "Distribution":
        """``uniform``, ``gaussian``, ``geom:P`` or ``file:PATH``."""
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind in ("uniform", "gaussian"):
            return cls(kind)
        if kind in ("geom", "geometric"):
            p = float(arg) if arg else 0.5
            if not 0 < p <= 1:
                raise ValueError(f"geometric p must lie in (0, 1], got {p}")
            return cls("geometric", p)
        if kind == "file":
            if not arg:
                raise ValueError("file distribution needs a path")
            return cls("file", path=arg)
        raise ValueError(f"unknown distribution {text!r}")

    def __str__(self):
        if self.kind == "geometric":
            return f"geom:{self.p:g}"
        if self.kind == "file":
            return f"file:{self.path}"
        return self.kind


def gen_data(distribution, count: int, seed=0) -> np.ndarray:
    """Deterministic float32 samples; ``seed`` may be an int or an int sequence.

    The geometric mode yields signed integers ``±(G-1)`` with ``G ~ Geom(p)``,
    a symbol-skewed stream that pinned FixedLen packs poorly and Huffman well.
    """
    dist = Distribution.parse(distribution) if isinstance(distribution, str) else distribution
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    if dist.kind == "uniform":
        return rng.uniform(-1.0, 1.0, count).astype(np.float32)
    if dist.kind == "gaussian":
        return rng.standard_normal(count, dtype=np.float32)
    if dist.kind == "geometric":
        mag = rng.geometric(dist.p, count) - 1
        sign = np.where(rng.random(count) < 0.5, -1, 1)
        return (sign * mag).astype(np.float32)
    if dist.kind == "file":
        data = ingest_f32(dist.path)
        if data.size != count:
            raise ValueError(f"{dist.path} holds {data.size} floats, {count} requested")
        return data
    raise ValueError(dist.kind)


def ingest_f32(path) -> np.ndarray:
    """Whole file as little-endian float32."""
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise ValueError(f"{path}: {len(raw)} bytes is not a multiple of 4")
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)


def write_f32(path, data):
    Path(path).write_bytes(np.asarray(data, dtype="<f4").tobytes())
