"""Guaranteed sensitivity bounds from interval Jacobian bounds.

With ``D_f^x in A`` and ``D_f^p in B`` on an invariant set, the sensitivity
systems become the set-valued linear systems ``s^x' in A s^x`` and
``s^p' in A s^p + B``. Their solutions at ``T`` are enclosed by a truncated
Taylor series of the interval matrix exponential plus a remainder.

The remainder uses ``alpha = ||A||_inf * dt``: the tail of the exponential
series beyond order ``m`` has infinity norm at most

    eps = alpha**(m+1) / (m+1)! / (1 - alpha/(m+2)),

so every entry of the tail lies in ``[-eps, eps]``. The enclosure holds for
time-varying Jacobians too: each Peano-Baker term of order ``i`` is an
average over point products drawn from ``A**i`` (resp. ``A**i B``), and
interval matrices are convex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..interval import (
    Interval,
    IntervalMatrix,
    IntervalVector,
    iv_div,
    iv_norm_inf,
    ivmat_mul,
    ivmat_scale,
    ivmat_scaled_sum,
)
from ..models import SystemModel
from . import SensitivityBounds

__all__ = [
    "JacobianBounds",
    "InfeasibleOrderError",
    "jacobian_bounds",
    "minimal_taylor_order",
    "remainder_bound",
    "taylor_sensitivity_bounds",
]


class InfeasibleOrderError(ValueError):
    """Requested Taylor order is below the order needed for a convergent remainder."""

    def __init__(self, order: int, minimal: int):
        self.order = order
        self.minimal = minimal
        super().__init__(
            f"infeasible Taylor order: requested {order}, minimal order is {minimal}"
        )


@dataclass(frozen=True, eq=False)
class JacobianBounds:
    A: IntervalMatrix
    B: IntervalMatrix
    invariant_box: IntervalVector | None

    def __post_init__(self):
        if self.A.n_rows != self.A.n_cols:
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.n_rows != self.A.n_rows:
            raise ValueError(f"B has {self.B.n_rows} rows, A has {self.A.n_rows}")


def jacobian_bounds(model: SystemModel, box: IntervalVector | None, P: IntervalVector) -> JacobianBounds:
    """Interval enclosure of the model Jacobians over ``box x P``.

    ``box=None`` requests bounds valid on the whole state space (available
    for models whose Jacobian takes finitely many values, such as the
    piecewise-affine traffic networks).
    """
    if model.jac_range is None:
        raise ValueError(f"model {model.name} provides no Jacobian range evaluation")
    if box is not None and len(box) != model.n:
        raise ValueError(f"box has {len(box)} components, model has n={model.n}")
    if len(P) != model.q:
        raise ValueError(f"P has {len(P)} components, model has q={model.q}")
    A, B = model.jac_range(box, P)
    return JacobianBounds(A, B, box)


def minimal_taylor_order(jb: JacobianBounds | IntervalMatrix, dt: float) -> int:
    """Smallest admissible order: ``max(0, ceil(||A||_inf dt) - 1)``.

    Linear in ``dt``; guarantees ``alpha / (m + 2) < 1``.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    A = jb.A if isinstance(jb, JacobianBounds) else jb
    alpha = iv_norm_inf(A) * dt
    return max(0, math.ceil(alpha) - 1)


def remainder_bound(alpha: float, order: int) -> float:
    """Upper bound on the infinity norm of the exponential tail past ``order``."""
    if alpha == 0.0:
        return 0.0
    m = order
    ratio = alpha / (m + 2)
    if ratio >= 1.0:
        raise InfeasibleOrderError(order, max(0, math.ceil(alpha) - 1))
    log_eps = (m + 1) * math.log(alpha) - math.lgamma(m + 2) - math.log1p(-ratio)
    # a few ulps of slack for log/exp/lgamma rounding
    return math.exp(log_eps) * (1.0 + 1e-12)


def _inv_factorial(k: int) -> Interval:
    f = Interval.point(1.0)
    for j in range(2, k + 1):
        f = iv_div(f, Interval.point(float(j)))
    return f


def taylor_sensitivity_bounds(jb: JacobianBounds, t0: float, T: float, order: int) -> SensitivityBounds:
    """Guaranteed bounds on ``s^x(T)`` and ``s^p(T)``.

    ``s^x in sum_{i<=m} (A dt)^i / i! + E`` and
    ``s^p in sum_{i<=m} (A dt)^i / (i+1)! (dt B) + E (dt B)``, each term
    multiplied by ``dt B`` before summation.
    """
    dt = float(T) - float(t0)
    if dt < 0:
        raise ValueError(f"horizon T={T} precedes t0={t0}")
    order = int(order)
    minimal = minimal_taylor_order(jb, dt)
    if order < minimal:
        raise InfeasibleOrderError(order, minimal)
    n = jb.A.n_rows
    Adt = ivmat_scale(dt, jb.A)
    Bdt = ivmat_scale(dt, jb.B)
    alpha = iv_norm_inf(jb.A) * dt
    eps = remainder_bound(alpha, order)
    E = IntervalMatrix(np.full((n, n), -eps), np.full((n, n), eps))

    power = IntervalMatrix.identity(n)
    sx_terms = []
    sp_terms = []
    for i in range(order + 1):
        if i > 0:
            power = ivmat_mul(power, Adt)
        sx_terms.append((_inv_factorial(i), power))
        sp_terms.append((1.0, ivmat_mul(ivmat_scale(_inv_factorial(i + 1), power), Bdt)))
    sx_terms.append((1.0, E))
    sp_terms.append((1.0, ivmat_mul(E, Bdt)))
    return SensitivityBounds(
        ivmat_scaled_sum(sx_terms), ivmat_scaled_sum(sp_terms), True, (float(t0), float(T))
    )
