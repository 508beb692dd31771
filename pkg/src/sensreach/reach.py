"""Interval over-approximation of the reachable set from sensitivity bounds.

For each output dimension ``i`` two vertices of ``X0 x P`` are chosen from
the signs of the sensitivity-bound centers: the one that minimizes and the
one that maximizes ``Phi_i`` for a system whose sensitivities had exactly
those signs. With sign-stable bounds the two successors already give the
exact interval hull of the reachable set. When some entries straddle zero,
the interval is widened by the compensation terms

    slack_i = c^i . (xi_lo^i - xi_hi^i) + d^i . (pi_lo^i - pi_hi^i) >= 0

which correct for the part of the bounds on the "wrong" side of zero.
The same algebra applies to any map ``F(t, x, p)`` with bounded Jacobians.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import SensitivityBounds
from .integrate import IntegratorConfig, flow
from .interval import IntervalMatrix, IntervalVector, _mul_arrays, add_hi, add_lo
from .models import ReachSpec, SystemModel

__all__ = [
    "VertexSelection",
    "Compensation",
    "OverApprox",
    "NotSignStableError",
    "select_vertices",
    "compensation_vectors",
    "overapprox_sign_stable",
    "overapprox_bounded",
    "overapprox_discrete",
    "corner_points",
    "sample_successors",
    "tightness_check",
    "containment_tolerance",
]


class NotSignStableError(ValueError):
    """Sign-stable construction requested for bounds with entries straddling zero."""


@dataclass(frozen=True, eq=False)
class VertexSelection:
    """Row ``i`` holds the vertices used for output dimension ``i``."""

    xi_lo: np.ndarray
    xi_hi: np.ndarray
    pi_lo: np.ndarray
    pi_hi: np.ndarray


@dataclass(frozen=True, eq=False)
class Compensation:
    c: np.ndarray
    d: np.ndarray


@dataclass(frozen=True, eq=False)
class OverApprox:
    interval: IntervalVector
    tight: bool
    per_dim_slack: np.ndarray
    phi_evals: int
    method: str = "bounded"
    vertices: VertexSelection | None = field(default=None, repr=False)
    compensation: Compensation | None = field(default=None, repr=False)

    def __post_init__(self):
        slack = np.asarray(self.per_dim_slack, dtype=float)
        if slack.shape != (len(self.interval),):
            raise ValueError("per_dim_slack must have one entry per dimension")
        if np.any(slack < 0):
            raise ValueError("per_dim_slack must be non-negative")
        if self.tight and np.any(slack != 0):
            raise ValueError("a tight result cannot carry compensation slack")
        object.__setattr__(self, "per_dim_slack", slack)

    def contains(self, y, atol=0.0) -> np.ndarray:
        """Row mask of points inside the interval, with an absolute tolerance."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        atol = np.broadcast_to(np.asarray(atol, dtype=float), (len(self.interval),))
        inside = (y >= self.interval.lo - atol) & (y <= self.interval.hi + atol)
        return inside.all(axis=1)

    def to_dict(self) -> dict:
        return {
            "interval": self.interval.to_pairs(),
            "tight": self.tight,
            "per_dim_slack": self.per_dim_slack.tolist(),
            "phi_evals": self.phi_evals,
            "method": self.method,
            "volume": self.interval.volume,
        }


def _nonneg_center(M: IntervalMatrix) -> np.ndarray:
    # sign of lo + hi is exact in floating point, unlike rounding (lo + hi) / 2
    return (M.lo + M.hi) >= 0


def _check_dims(sx: IntervalMatrix, sp: IntervalMatrix, X0: IntervalVector, P: IntervalVector):
    n, q = len(X0), len(P)
    if sx.shape != (n, n):
        raise ValueError(f"state sensitivity bounds have shape {sx.shape}, expected {(n, n)}")
    if sp.shape != (n, q):
        raise ValueError(f"parameter sensitivity bounds have shape {sp.shape}, expected {(n, q)}")


def _select(sx: IntervalMatrix, sp: IntervalMatrix, X0: IntervalVector, P: IntervalVector) -> VertexSelection:
    px = _nonneg_center(sx)
    pp = _nonneg_center(sp)
    return VertexSelection(
        xi_lo=np.where(px, X0.lo, X0.hi),
        xi_hi=np.where(px, X0.hi, X0.lo),
        pi_lo=np.where(pp, P.lo, P.hi),
        pi_hi=np.where(pp, P.hi, P.lo),
    )


def _compensate(sx: IntervalMatrix, sp: IntervalMatrix) -> Compensation:
    return Compensation(
        c=np.where(_nonneg_center(sx), np.minimum(0.0, sx.lo), np.maximum(0.0, sx.hi)),
        d=np.where(_nonneg_center(sp), np.minimum(0.0, sp.lo), np.maximum(0.0, sp.hi)),
    )


def select_vertices(bounds: SensitivityBounds, X0: IntervalVector, P: IntervalVector) -> VertexSelection:
    """Per-dimension diagonally opposite vertices of ``X0`` and ``P``.

    A center ``>= 0`` (zero included) keeps the ``(lo, hi)`` orientation;
    a negative center flips it.
    """
    _check_dims(bounds.sx, bounds.sp, X0, P)
    return _select(bounds.sx, bounds.sp, X0, P)


def compensation_vectors(bounds: SensitivityBounds) -> Compensation:
    """``min(0, lo)`` for entries with center ``>= 0``, ``max(0, hi)`` otherwise."""
    return _compensate(bounds.sx, bounds.sp)


def _slack_upper(comp: Compensation, sel: VertexSelection) -> np.ndarray:
    """Upper bound, rounded outward, of ``c^i.(xi_lo - xi_hi) + d^i.(pi_lo - pi_hi)``."""
    n = comp.c.shape[0]
    total = np.zeros(n)
    for coef, a, b in ((comp.c, sel.xi_lo, sel.xi_hi), (comp.d, sel.pi_lo, sel.pi_hi)):
        dlo, dhi = add_lo(a, -b), add_hi(a, -b)
        _, phi = _mul_arrays(coef, coef, dlo, dhi)
        for j in range(coef.shape[1]):
            total = add_hi(total, phi[:, j])
    return total


def _assemble(evaluate, sx, sp, X0, P, method) -> OverApprox:
    """Shared construction for flows and discrete maps.

    ``evaluate(xs, ps)`` maps stacked vertices to successors. Identical
    ``(xi, pi)`` pairs are evaluated once.
    """
    _check_dims(sx, sp, X0, P)
    n = len(X0)
    sel = _select(sx, sp, X0, P)
    comp = _compensate(sx, sp)
    pairs = np.concatenate(
        [np.hstack([sel.xi_lo, sel.pi_lo]), np.hstack([sel.xi_hi, sel.pi_hi])], axis=0
    )
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    succ = np.asarray(evaluate(uniq[:, :n], uniq[:, n:]), dtype=float).reshape(len(uniq), n)
    rows = np.arange(n)
    phi_lo = succ[inverse[:n], rows]
    phi_hi = succ[inverse[n:], rows]
    # integration noise on a zero-sensitivity dimension can invert the pair
    a, b = np.minimum(phi_lo, phi_hi), np.maximum(phi_lo, phi_hi)
    slack = _slack_upper(comp, sel)
    lo = add_lo(a, -slack)
    hi = add_hi(b, slack)
    return OverApprox(
        interval=IntervalVector(lo, hi),
        tight=bool(np.all(slack == 0)),
        per_dim_slack=slack,
        phi_evals=len(uniq),
        method=method,
        vertices=sel,
        compensation=comp,
    )


def _flow_evaluator(model, spec, cfg):
    def evaluate(xs, ps):
        return flow(model, spec.t0, spec.T, xs, ps, cfg)

    return evaluate


def overapprox_sign_stable(
    model: SystemModel, spec: ReachSpec, bounds: SensitivityBounds, cfg: IntegratorConfig | None = None
) -> OverApprox:
    """Exact interval hull from at most ``2n`` successors; requires sign-stable bounds."""
    spec.check(model)
    if not bounds.all_sign_stable():
        raise NotSignStableError(
            f"{bounds.n_unstable()} sensitivity entries straddle zero; use overapprox_bounded"
        )
    return _assemble(_flow_evaluator(model, spec, cfg), bounds.sx, bounds.sp, spec.X0, spec.P, "sign-stable")


def overapprox_bounded(
    model: SystemModel, spec: ReachSpec, bounds: SensitivityBounds, cfg: IntegratorConfig | None = None
) -> OverApprox:
    """Vertex successors widened by the compensation slack; any valid bounds."""
    spec.check(model)
    return _assemble(_flow_evaluator(model, spec, cfg), bounds.sx, bounds.sp, spec.X0, spec.P, "bounded")


def overapprox_discrete(
    F: Callable,
    jac_bounds: tuple[IntervalMatrix, IntervalMatrix],
    t: float,
    X0: IntervalVector,
    P: IntervalVector,
    vectorized: bool = True,
) -> OverApprox:
    """Interval image of ``X0 x P`` under a map with bounded Jacobians.

    ``F(t, x, p)`` takes stacked rows when ``vectorized`` is True, single
    vectors otherwise.
    """
    A, B = jac_bounds
    X0 = X0 if isinstance(X0, IntervalVector) else IntervalVector.from_pairs(X0)
    P = P if isinstance(P, IntervalVector) else IntervalVector.from_pairs(P)

    def evaluate(xs, ps):
        if vectorized:
            return F(t, xs, ps)
        return np.array([F(t, x, p) for x, p in zip(xs, ps)])

    return _assemble(evaluate, A, B, X0, P, "discrete")


def corner_points(spec: ReachSpec, max_points: int = 1 << 14) -> np.ndarray:
    """All vertices of ``X0 x P`` over its non-degenerate dimensions, or none if too many."""
    lo = np.concatenate([spec.X0.lo, spec.P.lo])
    hi = np.concatenate([spec.X0.hi, spec.P.hi])
    free = np.flatnonzero(hi > lo)
    if 2 ** free.size > max_points:
        return np.empty((0, lo.size))
    pts = np.tile(lo, (2 ** free.size, 1))
    for r, bits in enumerate(itertools.product((0, 1), repeat=free.size)):
        pts[r, free] = np.where(np.array(bits, dtype=bool), hi[free], lo[free])
    return pts


def sample_successors(
    model: SystemModel,
    spec: ReachSpec,
    samples: int,
    rng: np.random.Generator | int | None = None,
    include_corners: bool = False,
    cfg: IntegratorConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ``(x0, p)`` draws (optionally plus all box corners) and their successors."""
    spec.check(model)
    rng = np.random.default_rng(rng)
    lo = np.concatenate([spec.X0.lo, spec.P.lo])
    hi = np.concatenate([spec.X0.hi, spec.P.hi])
    pts = lo + rng.random((int(samples), lo.size)) * (hi - lo)
    if include_corners:
        pts = np.concatenate([corner_points(spec), pts])
    n = model.n
    return pts, flow(model, spec.t0, spec.T, pts[:, :n], pts[:, n:], cfg)


def containment_tolerance(interval: IntervalVector, rtol: float = 1e-6) -> np.ndarray:
    """Per-dimension allowance for integration error in Monte-Carlo successors.

    Across min-branch kinks the default integrator reaches about 5e-7
    relative error on the traffic models, well above its nominal tolerance.
    """
    return rtol * (1.0 + np.maximum(np.abs(interval.lo), np.abs(interval.hi)))


def tightness_check(
    model: SystemModel,
    spec: ReachSpec,
    result: OverApprox,
    samples: int,
    rng: np.random.Generator | int | None = None,
    include_corners: bool = True,
    cfg: IntegratorConfig | None = None,
    successors: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Monte-Carlo containment and per-face gaps.

    Returns the fraction of successors inside ``result.interval`` and an
    ``(n, 2)`` array of gaps between each lower/upper face and the nearest
    successor coordinate. Corners of ``X0 x P`` are added to the random
    draws by default, since faces of a tight interval are attained there.
    Precomputed ``successors`` skip the integration.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if successors is None:
        _, successors = sample_successors(model, spec, samples, rng, include_corners, cfg)
    successors = np.atleast_2d(successors)
    iv = result.interval
    inside = result.contains(successors, containment_tolerance(iv))
    gaps = np.stack([successors.min(axis=0) - iv.lo, iv.hi - successors.max(axis=0)], axis=1)
    return float(inside.mean()), gaps
