"""Interface-layer quantizers.

Floats become integer symbols exactly once, before any collective runs.
Everything downstream of this module is lossless on symbols.

The quantizers follow the scikit-learn transformer protocol: ``fit`` derives
the scale, ``transform`` produces int32 symbols and ``inverse_transform``
reconstructs floats. The functional helpers (``eb_quantize`` and friends)
wrap them and return a :class:`QuantizedStream` carrying the metadata.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

INT32_MAX = np.iinfo(np.int32).max


class QuantMode(enum.IntEnum):
    ERROR_BOUNDED = 0
    QSGD = 1
    PREQUANTIZED = 2


@dataclass(frozen=True)
class QuantMeta:
    mode: QuantMode
    scale: float = 1.0
    levels: int = 1
    orig_raw_bytes: int = 0

    def check(self):
        if self.mode == QuantMode.PREQUANTIZED:
            return
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValueError(f"invalid scale {self.scale!r} for mode {self.mode.name}")
        if self.mode == QuantMode.QSGD and self.levels < 1:
            raise ValueError(f"QSGD needs levels >= 1, got {self.levels}")


@dataclass
class QuantizedStream:
    symbols: np.ndarray
    meta: QuantMeta
    count: int = field(init=False)

    def __post_init__(self):
        self.symbols = np.ascontiguousarray(self.symbols, dtype=np.int32)
        self.count = int(self.symbols.size)

    def compact_nbytes(self) -> int:
        """Bytes needed to store the symbols at the narrowest standard integer width."""
        return self.count * compact_itemsize(self.symbols)

    def with_symbols(self, symbols) -> "QuantizedStream":
        return QuantizedStream(symbols, self.meta)


def compact_itemsize(symbols: np.ndarray) -> int:
    if symbols.size == 0:
        return 1
    lo, hi = int(symbols.min()), int(symbols.max())
    for dt in (np.int8, np.int16, np.int32):
        info = np.iinfo(dt)
        if info.min <= lo and hi <= info.max:
            return np.dtype(dt).itemsize
    return 8


def _as_float_vector(X) -> np.ndarray:
    # Raises ValueError naming NaN/inf when present.
    arr = check_array(
        np.asarray(X).reshape(-1, 1) if np.ndim(X) <= 1 else X,
        dtype=np.float64,
        ensure_2d=False,
        ensure_min_samples=0,
        ensure_all_finite=True,
        input_name="X",
    )
    return arr.ravel()


def _checked_int32(values: np.ndarray) -> np.ndarray:
    if values.size and np.abs(values).max() > INT32_MAX:
        raise OverflowError("bin index exceeds the signed 32-bit symbol range")
    return values.astype(np.int32)


class ErrorBoundedQuantizer(TransformerMixin, BaseEstimator):
    """Uniform bins of width ``2 * rel * max|x|``; pointwise error never exceeds half a bin.

    ``scale`` pins the bin width instead of deriving it from the data, which is
    how ranks agree on one shared scale before a reduction.
    """

    def __init__(self, rel=1e-4, scale=None):
        self.rel = rel
        self.scale = scale

    def fit(self, X, y=None):
        x = _as_float_vector(X)
        if not (0 < self.rel <= 1):
            raise ValueError(f"rel must lie in (0, 1], got {self.rel!r}")
        if self.scale is not None:
            if not (np.isfinite(self.scale) and self.scale > 0):
                raise ValueError(f"scale must be positive and finite, got {self.scale!r}")
            self.scale_ = float(self.scale)
        else:
            peak = float(np.abs(x).max()) if x.size else 0.0
            self.scale_ = 2.0 * self.rel * peak if peak > 0 else 1.0
        self.error_bound_ = self.scale_ / 2.0
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        x = _as_float_vector(X)
        scale = self.scale_
        eb = self.error_bound_
        sym = np.rint(x / scale)
        # Rounding of x/scale and sym*scale can push a bin-edge value one ulp past eb.
        bad = np.abs(sym * scale - x) > eb
        if bad.any():
            idx = np.flatnonzero(bad)
            for cand in (sym[idx] - 1, sym[idx] + 1):
                ok = np.abs(cand * scale - x[idx]) <= eb
                sym[idx[ok]] = cand[ok]
            still = np.abs(sym[idx] * scale - x[idx]) > eb
            if still.any():
                raise ArithmeticError(
                    f"{int(still.sum())} values cannot meet the error bound at scale {scale!r}"
                )
        return _checked_int32(sym)

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        return np.asarray(X, dtype=np.float64) * self.scale_


class QSGDQuantizer(TransformerMixin, BaseEstimator):
    """Stochastic rounding of ``levels * |x| / ||x||`` to a neighbouring integer.

    The rounding probabilities make the reconstruction unbiased. The whole
    vector shares one L2 norm; ``scale`` overrides it with a shared norm.
    """

    def __init__(self, levels=4, random_state=None, scale=None):
        self.levels = levels
        self.random_state = random_state
        self.scale = scale

    def fit(self, X, y=None):
        x = _as_float_vector(X)
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValueError(f"levels must be a positive integer, got {self.levels!r}")
        if self.scale is not None:
            if not (np.isfinite(self.scale) and self.scale > 0):
                raise ValueError(f"scale must be positive and finite, got {self.scale!r}")
            self.scale_ = float(self.scale)
        else:
            norm = float(np.linalg.norm(x))
            self.scale_ = norm if norm > 0 else 1.0
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        x = _as_float_vector(X)
        u = self.levels * np.abs(x) / self.scale_
        base = np.floor(u)
        rng = np.random.default_rng(self.random_state)
        up = rng.random(x.size) < (u - base)
        return _checked_int32(np.sign(x) * (base + up))

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        return np.asarray(X, dtype=np.float64) * self.scale_ / self.levels


class PrequantizedPassthrough(TransformerMixin, BaseEstimator):
    """Input that is already integer-valued passes through as symbols."""

    def fit(self, X, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        x = _as_float_vector(X)
        if np.any(x != np.rint(x)):
            raise ValueError("pre-quantized input must be integer-valued")
        return _checked_int32(x)

    def inverse_transform(self, X):
        return np.asarray(X, dtype=np.float64)


def _orig_nbytes(x) -> int:
    return int(np.asarray(x).nbytes)


def eb_quantize(x, rel: float, scale: float | None = None) -> QuantizedStream:
    q = ErrorBoundedQuantizer(rel=rel, scale=scale).fit(x)
    meta = QuantMeta(QuantMode.ERROR_BOUNDED, scale=q.scale_, orig_raw_bytes=_orig_nbytes(x))
    return QuantizedStream(q.transform(x), meta)


def qsgd_quantize(x, levels: int, rng_seed=None, scale: float | None = None) -> QuantizedStream:
    q = QSGDQuantizer(levels=levels, random_state=rng_seed, scale=scale).fit(x)
    meta = QuantMeta(QuantMode.QSGD, scale=q.scale_, levels=int(levels), orig_raw_bytes=_orig_nbytes(x))
    return QuantizedStream(q.transform(x), meta)


def prequantized(x) -> QuantizedStream:
    sym = PrequantizedPassthrough().fit_transform(x)
    return QuantizedStream(sym, QuantMeta(QuantMode.PREQUANTIZED, orig_raw_bytes=_orig_nbytes(x)))


def dequantize_symbols(symbols, meta: QuantMeta) -> np.ndarray:
    """Reconstruct floats from (possibly widened, e.g. summed) symbols."""
    meta.check()
    s = np.asarray(symbols)
    if meta.mode == QuantMode.ERROR_BOUNDED:
        return s * meta.scale
    if meta.mode == QuantMode.QSGD:
        return s * meta.scale / meta.levels
    if meta.mode == QuantMode.PREQUANTIZED:
        return s.astype(np.float64)
    raise ValueError(f"unknown quantization mode {meta.mode!r}")


def dequantize(q: QuantizedStream) -> np.ndarray:
    return dequantize_symbols(q.symbols, q.meta)


def requantize(q: QuantizedStream, x, scale: float, rng_seed=None) -> QuantizedStream:
    """Quantize ``x`` again in ``q``'s mode at an externally agreed scale."""
    if q.meta.mode == QuantMode.ERROR_BOUNDED:
        out = eb_quantize(x, rel=1.0, scale=scale)
    elif q.meta.mode == QuantMode.QSGD:
        out = qsgd_quantize(x, q.meta.levels, rng_seed=rng_seed, scale=scale)
    else:
        return q
    return QuantizedStream(out.symbols, replace(out.meta, orig_raw_bytes=q.meta.orig_raw_bytes))


def make_quantizer(kind: str, **params):
    """Factory keyed by the CLI spellings ``eb``, ``qsgd`` and ``none``."""
    if kind == "eb":
        return ErrorBoundedQuantizer(**params)
    if kind == "qsgd":
        return QSGDQuantizer(**params)
    if kind == "none":
        return PrequantizedPassthrough()
    raise ValueError(f"unknown quantizer {kind!r}")
