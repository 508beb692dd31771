"""Trajectory and sensitivity integration.

The flow and its sensitivities are integrated with an embedded
Dormand-Prince 5(4) pair. The solver is vectorized over a batch of
independent initial value problems, each row carrying its own time and
step size, so a few hundred or a few thousand samples integrate in one
numpy loop without sharing step-size decisions.

Augmented state layout: ``x`` first, then ``s^x`` row-major, then ``s^p``
row-major.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import SystemModel

__all__ = [
    "IntegratorConfig",
    "AugmentedState",
    "IntegrationError",
    "solve_ivp_batch",
    "flow",
    "flow_augmented",
    "integrate_phi",
    "integrate_augmented",
]


class IntegrationError(RuntimeError):
    """Step budget exhausted or the state left the finite domain."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    initial_step: float | None = None
    max_steps: int = 100_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class AugmentedState:
    x: np.ndarray
    sx: np.ndarray
    sp: np.ndarray
    t: float


# Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner, Table 5.2)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BHAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BHAT

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


def _rms(a):
    return np.sqrt(np.mean(a * a, axis=-1))


def _initial_step(rhs, t, y, f0, rows, direction, cfg):
    """Starting step heuristic (Hairer, Norsett & Wanner, II.4)."""
    sc = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    d0 = _rms(y / sc)
    d1 = _rms(f0 / sc)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    y1 = y + direction * h0[:, None] * f0
    with np.errstate(all="ignore"):
        f1 = rhs(t + direction * h0, y1, rows)
        d2 = _rms((f1 - f0) / sc) / h0
    d2 = np.where(np.isfinite(d2), d2, np.inf)
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    return np.minimum(100 * h0, h1)


def solve_ivp_batch(rhs, t0: float, T: float, y0, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Integrate a batch of initial value problems from ``t0`` to ``T``.

    ``rhs(t, y, rows)`` receives per-row times ``(m,)``, states ``(m, d)``
    and the batch indices ``rows`` of those states. ``T < t0`` integrates
    backward in time.
    """
    cfg = cfg or IntegratorConfig()
    y = np.array(y0, dtype=float)
    if y.ndim != 2:
        raise ValueError("y0 must have shape (batch, dim)")
    nb = y.shape[0]
    t0, T = float(t0), float(T)
    if T == t0 or nb == 0:
        return y
    direction = 1.0 if T > t0 else -1.0
    span = abs(T - t0)

    rows_all = np.arange(nb)
    t = np.full(nb, t0)
    with np.errstate(all="ignore"):
        k1 = rhs(t, y, rows_all)
    if not np.all(np.isfinite(k1)) or not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite state or derivative at the initial time")
    if cfg.initial_step is not None:
        h = np.full(nb, float(cfg.initial_step))
    else:
        h = _initial_step(rhs, t, y, k1, rows_all, direction, cfg)
    h = np.minimum(h, span)
    steps = np.zeros(nb, dtype=np.int64)
    done = np.zeros(nb, dtype=bool)

    while not done.all():
        idx = np.flatnonzero(~done)
        ti, yi, k1i = t[idx], y[idx], k1[idx]
        remaining = np.abs(T - ti)
        last = h[idx] >= remaining
        hi = np.where(last, remaining, h[idx])
        hs = direction * hi
        ks = [k1i]
        with np.errstate(all="ignore"):
            for s in range(1, 7):
                acc = sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                ks.append(rhs(ti + _C[s] * hs, yi + hs[:, None] * acc, idx))
            ynew = yi + hs[:, None] * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
            err = hs[:, None] * sum(e * k for e, k in zip(_E, ks))
            sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(yi), np.abs(ynew))
            en = _rms(err / sc)
        finite = np.isfinite(en) & np.all(np.isfinite(ynew), axis=1) & np.all(np.isfinite(ks[6]), axis=1)
        en = np.where(finite, en, np.inf)
        accept = en <= 1.0

        with np.errstate(divide="ignore"):
            factor = np.clip(_SAFETY * en ** -0.2, _MIN_FACTOR, _MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        factor = np.where(np.isfinite(en), factor, _MIN_FACTOR)

        acc_idx = idx[accept]
        t[acc_idx] = np.where(last[accept], T, ti[accept] + hs[accept])
        y[acc_idx] = ynew[accept]
        k1[acc_idx] = ks[6][accept]
        h[idx] = hi * factor
        done[acc_idx] = last[accept]
        steps[idx] += 1

        tiny = h[idx] < 1e-14 * np.maximum(1.0, np.abs(ti))
        if tiny.any():
            bad = idx[tiny]
            if not finite[tiny].all():
                raise IntegrationError(
                    f"non-finite state near t={t[bad[0]]:.6g} (blow-up or domain exit)"
                )
            raise IntegrationError(f"step size underflow near t={t[bad[0]]:.6g}")
        if steps.max() > cfg.max_steps:
            raise IntegrationError(f"exceeded max_steps={cfg.max_steps}")
    return y


def _batch_inputs(model: SystemModel, x0, p):
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    p = np.asarray(p, dtype=float)
    if p.ndim <= 1:
        p = p.reshape(1, -1)
    if p.shape[0] == 1 and x0.shape[0] > 1:
        p = np.repeat(p, x0.shape[0], axis=0)
    if x0.shape[1] != model.n:
        raise ValueError(f"x0 has dimension {x0.shape[1]}, model {model.name} has n={model.n}")
    if p.shape[1] != model.q:
        raise ValueError(f"p has dimension {p.shape[1]}, model {model.name} has q={model.q}")
    if p.shape[0] != x0.shape[0]:
        raise ValueError("x0 and p batch sizes differ")
    return x0, p


def flow(model: SystemModel, t0: float, T: float, x0, p, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Successors ``Phi(T; t0, x0, p)`` for a batch ``x0 (B, n)``, ``p (B, q)``."""
    x0, p = _batch_inputs(model, x0, p)

    def rhs(t, y, rows):
        return model.f(t, y, p[rows])

    return solve_ivp_batch(rhs, t0, T, x0, cfg)


def flow_augmented(model: SystemModel, t0: float, T: float, x0, p, cfg: IntegratorConfig | None = None):
    """Batched ``(Phi, s^x, s^p)`` at ``T`` with shapes ``(B,n)``, ``(B,n,n)``, ``(B,n,q)``."""
    if T < t0:
        raise ValueError(f"horizon T={T} precedes t0={t0}")
    x0, p = _batch_inputs(model, x0, p)
    n, q = model.n, model.q
    nb = x0.shape[0]
    y0 = np.concatenate(
        [x0, np.broadcast_to(np.eye(n).ravel(), (nb, n * n)), np.zeros((nb, n * q))], axis=1
    )

    def rhs(t, y, rows):
        m = y.shape[0]
        x = y[:, :n]
        sx = y[:, n : n + n * n].reshape(m, n, n)
        sp = y[:, n + n * n :].reshape(m, n, q)
        pr = p[rows]
        if model.derivatives is not None:
            fx, J, Jp = model.derivatives(t, x, pr)
        else:
            fx, J, Jp = model.f(t, x, pr), model.jac_x(t, x, pr), model.jac_p(t, x, pr)
        dsx = J @ sx
        dsp = J @ sp + Jp
        return np.concatenate([fx, dsx.reshape(m, -1), dsp.reshape(m, -1)], axis=1)

    y = solve_ivp_batch(rhs, t0, T, y0, cfg)
    return y[:, :n], y[:, n : n + n * n].reshape(nb, n, n), y[:, n + n * n :].reshape(nb, n, q)


def integrate_phi(model: SystemModel, t0: float, T: float, x0, p, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Single successor ``Phi(T; t0, x0, p)``."""
    if T < t0:
        raise ValueError(f"horizon T={T} precedes t0={t0}")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise ValueError("x0 must be a vector")
    return flow(model, t0, T, x0[None, :], np.asarray(p, dtype=float).reshape(1, -1), cfg)[0]


def integrate_augmented(model: SystemModel, t0: float, T: float, x0, p, cfg: IntegratorConfig | None = None) -> AugmentedState:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise ValueError("x0 must be a vector")
    x, sx, sp = flow_augmented(model, t0, T, x0[None, :], np.asarray(p, dtype=float).reshape(1, -1), cfg)
    return AugmentedState(x=x[0], sx=sx[0], sp=sp[0], t=float(T))
