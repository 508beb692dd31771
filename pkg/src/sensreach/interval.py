"""Interval arithmetic for scalars, vectors and matrices.

Endpoints are floats. Every primitive operation rounds outward: the
floating-point rounding error of each endpoint is recovered with an
error-free transformation (TwoSum / TwoProduct) and the endpoint is moved
one ULP outward only when the rounded result is on the wrong side of the
exact one. Exact operations therefore stay exact, and no FPU rounding-mode
control is needed.

Empty intervals are not representable; :func:`iv_intersect` returns
``None`` for disjoint inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Interval",
    "IntervalVector",
    "IntervalMatrix",
    "iv_add",
    "iv_sub",
    "iv_mul",
    "iv_neg",
    "iv_div",
    "iv_sqr",
    "iv_sqrt",
    "iv_hull",
    "iv_intersect",
    "ivmat_add",
    "ivmat_mul",
    "ivmat_scale",
    "ivmat_scaled_sum",
    "iv_norm_inf",
]

_SPLITTER = 134217729.0  # 2**27 + 1
_TINY = 1e-290
_INF = np.inf
_MAX = float(np.finfo(float).max)


# ---------------------------------------------------------------------------
# array-level directed rounding
# ---------------------------------------------------------------------------

def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    # a product in or below the subnormal range is not exact even when err says so
    err = np.where((np.abs(p) < _TINY) & (a != 0) & (b != 0), np.nan, err)
    return p, err


def _unsure(s, err):
    # error-free transforms break down on overflow and in the subnormal range
    return ~np.isfinite(err) | (np.abs(s) < _TINY) & (s != 0)


def _down(s, err):
    s = np.asarray(s, dtype=float)
    err = np.asarray(err, dtype=float)
    with np.errstate(invalid="ignore"):
        move = (err < 0) | _unsure(s, err)
    out = np.where(move & np.isfinite(s), np.nextafter(s, -_INF), s)
    # overflow to +inf: the exact value is still finite
    return np.where(out == _INF, _MAX, out)


def _up(s, err):
    s = np.asarray(s, dtype=float)
    err = np.asarray(err, dtype=float)
    with np.errstate(invalid="ignore"):
        move = (err > 0) | _unsure(s, err)
    out = np.where(move & np.isfinite(s), np.nextafter(s, _INF), s)
    return np.where(out == -_INF, -_MAX, out)


def add_lo(a, b):
    with np.errstate(invalid="ignore", over="ignore"):
        return _down(*_two_sum(np.asarray(a, float), np.asarray(b, float)))


def add_hi(a, b):
    with np.errstate(invalid="ignore", over="ignore"):
        return _up(*_two_sum(np.asarray(a, float), np.asarray(b, float)))


def _mul_arrays(alo, ahi, blo, bhi):
    """Endpoint-wise interval product of broadcastable lo/hi arrays."""
    los, his = [], []
    with np.errstate(invalid="ignore", over="ignore"):
        for x in (alo, ahi):
            for y in (blo, bhi):
                p, e = _two_prod(np.asarray(x, float), np.asarray(y, float))
                # 0 * inf style products only arise from infinite endpoints
                zero_inf = np.isnan(p)
                p = np.where(zero_inf, 0.0, p)
                e = np.where(zero_inf, 0.0, e)
                los.append(_down(p, e))
                his.append(_up(p, e))
    return np.minimum.reduce(los), np.maximum.reduce(his)


# pure-float versions of the same transforms for scalar intervals, where
# numpy's per-call overhead would dominate

def _s_round(s, err, direction):
    if not math.isfinite(s):
        # an overflowed sum or product is finite: clamp the endpoint pointing inward
        if s == direction * -math.inf:
            return direction * -_MAX
        return s
    if not math.isfinite(err) or (s != 0.0 and abs(s) < _TINY) or err * direction > 0:
        return math.nextafter(s, direction * math.inf)
    return s


def _s_add(a, b, direction):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return _s_round(s, err, direction)


def _s_prod(a, b, direction):
    p = a * b
    if p != p:
        return 0.0
    if abs(p) < _TINY and a != 0.0 and b != 0.0:
        return math.nextafter(p, direction * math.inf)
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return _s_round(p, err, direction)


def _s_mul(alo, ahi, blo, bhi):
    pairs = ((alo, blo), (alo, bhi), (ahi, blo), (ahi, bhi))
    return min(_s_prod(x, y, -1.0) for x, y in pairs), max(_s_prod(x, y, 1.0) for x, y in pairs)


def _check_endpoints(lo, hi):
    if np.isnan(lo).any() or np.isnan(hi).any():
        raise ValueError("interval endpoints must not be NaN")
    if (lo > hi).any():
        raise ValueError("interval lower endpoint exceeds upper endpoint")


# ---------------------------------------------------------------------------
# scalar intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Closed real interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if lo != lo or hi != hi:
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError("interval lower endpoint exceeds upper endpoint")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    __contains__ = contains

    def subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def straddles_zero(self) -> bool:
        return self.lo < 0 < self.hi

    def __add__(self, other):
        return iv_add(self, _as_interval(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _as_interval(other))

    def __rsub__(self, other):
        return iv_sub(_as_interval(other), self)

    def __mul__(self, other):
        return iv_mul(self, _as_interval(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, _as_interval(other))

    def __neg__(self):
        return iv_neg(self)

    def __iter__(self):
        yield self.lo
        yield self.hi

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"


def _as_interval(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval.point(float(x))


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(_s_add(a.lo, b.lo, -1.0), _s_add(a.hi, b.hi, 1.0))


def iv_neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def iv_sub(a: Interval, b: Interval) -> Interval:
    return iv_add(a, iv_neg(b))


def iv_mul(a: Interval, b: Interval) -> Interval:
    return Interval(*_s_mul(a.lo, a.hi, b.lo, b.hi))


def iv_div(a: Interval, b: Interval) -> Interval:
    """Quotient ``a / b``; ``b`` must not contain zero."""
    if b.lo <= 0.0 <= b.hi:
        raise ZeroDivisionError(f"divisor {b} contains zero")
    cands = [x / y for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    lo, hi = min(cands), max(cands)
    return Interval(math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf))


def iv_sqr(a: Interval) -> Interval:
    """Square, tight when ``a`` straddles zero."""
    hi = _s_prod(a.mag, a.mag, 1.0)
    if a.lo <= 0.0 <= a.hi:
        return Interval(0.0, hi)
    m = min(abs(a.lo), abs(a.hi))
    return Interval(_s_prod(m, m, -1.0), hi)


def iv_sqrt(a: Interval) -> Interval:
    if a.lo < 0:
        raise ValueError(f"sqrt of {a} with negative part")
    lo = max(0.0, math.nextafter(math.sqrt(a.lo), -math.inf))
    return Interval(lo, math.nextafter(math.sqrt(a.hi), math.inf))


def iv_hull(*ivs: Interval) -> Interval:
    return Interval(min(i.lo for i in ivs), max(i.hi for i in ivs))


def iv_intersect(a: Interval, b: Interval) -> Interval | None:
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    if lo > hi:
        return None
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# interval vectors and matrices
# ---------------------------------------------------------------------------

class _IntervalArray:
    """Immutable lo/hi array pair of fixed dimensionality."""

    _ndim = 0

    __slots__ = ("_lo", "_hi")

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        if lo.shape != hi.shape:
            raise ValueError(f"lo shape {lo.shape} != hi shape {hi.shape}")
        if lo.ndim != self._ndim:
            raise ValueError(
                f"{type(self).__name__} needs {self._ndim}-d endpoints, got {lo.ndim}-d"
            )
        _check_endpoints(lo, hi)
        lo.flags.writeable = False
        hi.flags.writeable = False
        self._lo = lo
        self._hi = hi

    @property
    def lo(self) -> np.ndarray:
        return self._lo

    @property
    def hi(self) -> np.ndarray:
        return self._hi

    @property
    def shape(self):
        return self._lo.shape

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self._lo + self._hi)

    @property
    def width(self) -> np.ndarray:
        return self._hi - self._lo

    @property
    def mag(self) -> np.ndarray:
        return np.maximum(np.abs(self._lo), np.abs(self._hi))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((self._lo <= x) & (x <= self._hi)))

    def subset(self, other) -> bool:
        return bool(np.all(other.lo <= self._lo) and np.all(self._hi <= other.hi))

    def is_degenerate(self) -> bool:
        return bool(np.all(self._lo == self._hi))

    def sign_stable(self) -> np.ndarray:
        """Boolean mask: entry has ``lo >= 0`` or ``hi <= 0``."""
        return (self._lo >= 0) | (self._hi <= 0)

    def hull(self, other):
        return type(self)(np.minimum(self._lo, other.lo), np.maximum(self._hi, other.hi))

    def to_pairs(self) -> list:
        return np.stack([self._lo, self._hi], axis=-1).tolist()

    def __getitem__(self, idx):
        lo, hi = self._lo[idx], self._hi[idx]
        if np.ndim(lo) == 0:
            return Interval(float(lo), float(hi))
        if np.ndim(lo) == 1:
            return IntervalVector(lo, hi)
        return IntervalMatrix(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, _IntervalArray):
            return NotImplemented
        return (
            self.shape == other.shape
            and bool(np.array_equal(self._lo, other.lo))
            and bool(np.array_equal(self._hi, other.hi))
        )

    __hash__ = None

    def __repr__(self):
        return f"{type(self).__name__}({self.to_pairs()!r})"


class IntervalVector(_IntervalArray):
    """Box in R^n stored as endpoint vectors."""

    _ndim = 1
    __slots__ = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "IntervalVector":
        arr = np.asarray([list(p) for p in pairs], dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @classmethod
    def from_intervals(cls, comps: Iterable[Interval]) -> "IntervalVector":
        comps = list(comps)
        return cls([c.lo for c in comps], [c.hi for c in comps])

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def volume(self) -> float:
        return float(np.prod(self.width))


class IntervalMatrix(_IntervalArray):
    """Matrix whose entries are closed intervals."""

    _ndim = 2
    __slots__ = ()

    @classmethod
    def from_pairs(cls, rows) -> "IntervalMatrix":
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ValueError("expected nested rows of [lo, hi] pairs")
        return cls(arr[..., 0], arr[..., 1])

    @classmethod
    def point(cls, m) -> "IntervalMatrix":
        return cls(m, m)

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "IntervalMatrix":
        z = np.zeros((n_rows, n_cols))
        return cls(z, z)

    @classmethod
    def identity(cls, n: int) -> "IntervalMatrix":
        return cls.point(np.eye(n))

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]

    def __matmul__(self, other):
        return ivmat_mul(self, other)

    def __add__(self, other):
        return ivmat_add(self, other)


def ivmat_add(A: IntervalMatrix, B: IntervalMatrix) -> IntervalMatrix:
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return IntervalMatrix(add_lo(A.lo, B.lo), add_hi(A.hi, B.hi))


def ivmat_mul(A: IntervalMatrix, B: IntervalMatrix) -> IntervalMatrix:
    """Interval matrix product, entry (i, k) = sum_j A[i, j] * B[j, k]."""
    if A.n_cols != B.n_rows:
        raise ValueError(f"cannot multiply {A.shape} by {B.shape}")
    plo, phi = _mul_arrays(
        A.lo[:, :, None], A.hi[:, :, None], B.lo[None, :, :], B.hi[None, :, :]
    )
    lo = np.zeros((A.n_rows, B.n_cols))
    hi = np.zeros((A.n_rows, B.n_cols))
    for j in range(A.n_cols):
        lo = add_lo(lo, plo[:, j, :])
        hi = add_hi(hi, phi[:, j, :])
    return IntervalMatrix(lo, hi)


def _coef(s) -> tuple[float, float]:
    if isinstance(s, Interval):
        return s.lo, s.hi
    return float(s), float(s)


def ivmat_scale(s: float | Interval, M: IntervalMatrix) -> IntervalMatrix:
    lo, hi = _mul_arrays(*_coef(s), M.lo, M.hi)
    return IntervalMatrix(lo, hi)


def ivmat_scaled_sum(terms: Iterable[tuple[float | Interval, IntervalMatrix]]) -> IntervalMatrix:
    """Componentwise ``sum(scalar * M)`` with outward rounding.

    A scalar may itself be an :class:`Interval` (e.g. an enclosure of 1/i!).
    """
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    shape = terms[0][1].shape
    lo = np.zeros(shape)
    hi = np.zeros(shape)
    for s, M in terms:
        if M.shape != shape:
            raise ValueError(f"shape mismatch: {M.shape} vs {shape}")
        slo, shi = _mul_arrays(*_coef(s), M.lo, M.hi)
        lo = add_lo(lo, slo)
        hi = add_hi(hi, shi)
    return IntervalMatrix(lo, hi)


def iv_norm_inf(A: IntervalMatrix) -> float:
    """Upper bound on the infinity norm of every point matrix in ``A``."""
    mag = A.mag
    total = np.zeros(A.n_rows)
    for j in range(A.n_cols):
        total = add_hi(total, mag[:, j])
    return float(total.max()) if total.size else 0.0
