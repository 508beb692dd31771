"""Sensitivity bounds estimated by sampling, then enlarged by falsification.

Sampling integrates the augmented system at a grid or random set of
``(x0, p)`` in ``X0 x P`` and takes elementwise min/max. Falsification then
searches for an ``(x0, p)`` whose sensitivity leaves the current bounds by
minimizing

    min_ij ( (hi_ij - lo_ij)/2 - |s_ij(T; x0, p) - center_ij| )

and, when the minimum is negative, stretches the bounds to cover the
offending sensitivity. Sampled bounds carry no formal guarantee.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..integrate import IntegratorConfig, flow_augmented
from ..models import ReachSpec, SystemModel
from . import SensitivityBounds

__all__ = [
    "Grid",
    "RandomSamples",
    "FalsificationReport",
    "sample_points",
    "sample_bounds",
    "falsify_bounds",
    "falsification_objective",
]

# rows per augmented-integration call; bounds memory for large grids
_CHUNK = 4096


@dataclass(frozen=True)
class Grid:
    """``k_per_dim`` equally spaced values per non-degenerate dimension (endpoints included)."""

    k_per_dim: int = 2

    def __post_init__(self):
        if self.k_per_dim < 1:
            raise ValueError("k_per_dim must be >= 1")


@dataclass(frozen=True)
class RandomSamples:
    """``count`` uniform draws from ``X0 x P``."""

    count: int = 100
    seed: int | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class FalsificationReport:
    iterations: int
    final_min_value: float
    enlargements: int
    samples_used: int

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_min_value": self.final_min_value,
            "enlargements": self.enlargements,
            "samples_used": self.samples_used,
        }


def _box_arrays(spec: ReachSpec):
    lo = np.concatenate([spec.X0.lo, spec.P.lo])
    hi = np.concatenate([spec.X0.hi, spec.P.hi])
    return lo, hi


def sample_points(spec: ReachSpec, strategy, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stacked ``(x0, p)`` rows of shape ``(N, n + q)`` for a sampling strategy."""
    lo, hi = _box_arrays(spec)
    if isinstance(strategy, Grid):
        axes = [
            np.unique(np.linspace(a, b, strategy.k_per_dim)) if b > a else np.array([a])
            for a, b in zip(lo, hi)
        ]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, lo.size)
    if isinstance(strategy, RandomSamples):
        if rng is None:
            rng = np.random.default_rng(strategy.seed)
        return lo + rng.random((strategy.count, lo.size)) * (hi - lo)
    raise TypeError(f"unknown sampling strategy {strategy!r}")


def _sensitivities(model, spec, pts, cfg):
    n = model.n
    xs, sxs, sps = [], [], []
    for k in range(0, len(pts), _CHUNK):
        chunk = pts[k : k + _CHUNK]
        x, sx, sp = flow_augmented(model, spec.t0, spec.T, chunk[:, :n], chunk[:, n:], cfg)
        xs.append(x)
        sxs.append(sx)
        sps.append(sp)
    return np.concatenate(xs), np.concatenate(sxs), np.concatenate(sps)


def sample_bounds(
    model: SystemModel,
    spec: ReachSpec,
    strategy=Grid(2),
    cfg: IntegratorConfig | None = None,
    rng: np.random.Generator | None = None,
) -> SensitivityBounds:
    """Elementwise min/max of ``s^x(T)``, ``s^p(T)`` over the sampled ``(x0, p)``."""
    spec.check(model)
    pts = sample_points(spec, strategy, rng)
    if len(pts) == 0:
        raise ValueError("sampling strategy produced no samples")
    _, sx, sp = _sensitivities(model, spec, pts, cfg)
    return SensitivityBounds.from_samples(sx, sp, (spec.t0, spec.T))


def falsification_objective(bounds_part, s) -> np.ndarray:
    """``min_ij(half_width - |s - center|)`` for a batch ``s`` of shape ``(..., r, c)``."""
    center = bounds_part.mid
    half = bounds_part.width / 2.0
    val = half - np.abs(np.asarray(s, dtype=float) - center)
    return val.reshape(val.shape[:-2] + (-1,)).min(axis=-1)


def _escapes(bounds_part, s, rtol):
    """Rows of ``s`` leaving ``bounds_part`` by more than the integration noise allowance."""
    slack = rtol * (1.0 + np.abs(bounds_part.mid))
    out = (s < bounds_part.lo - slack) | (s > bounds_part.hi + slack)
    return out.reshape(out.shape[0], -1).any(axis=1)


class _LockstepNelderMead:
    """Several bounded Nelder-Mead runs advanced together.

    Every iteration proposes reflection, expansion and both contractions for
    each simplex and evaluates all of them in one batched call, so the cost
    per iteration is one augmented integration of a small batch. Coordinates
    live in the unit cube and are clamped before evaluation.
    """

    def __init__(self, starts, step=0.1):
        k, d = starts.shape
        self.d = d
        # adaptive coefficients (Gao & Han) keep the simplex from collapsing in higher dimension
        self.alpha = 1.0
        self.gamma = 1.0 + 2.0 / d
        self.rho = 0.75 - 1.0 / (2.0 * d)
        self.sigma = 1.0 - 1.0 / d if d > 1 else 0.5
        simplex = np.repeat(starts[:, None, :], d + 1, axis=1)
        for j in range(d):
            up = starts[:, j] + step <= 1.0
            simplex[:, j + 1, j] += np.where(up, step, -step)
        self.simplex = np.clip(simplex, 0.0, 1.0)
        self.values = None

    def initial_points(self):
        return self.simplex.reshape(-1, self.d)

    def set_initial(self, values):
        self.values = values.reshape(self.simplex.shape[:2])
        self._sort()

    def _sort(self):
        order = np.argsort(self.values, axis=1, kind="stable")
        self.simplex = np.take_along_axis(self.simplex, order[:, :, None], axis=1)
        self.values = np.take_along_axis(self.values, order, axis=1)

    def proposals(self):
        centroid = self.simplex[:, :-1].mean(axis=1)
        worst = self.simplex[:, -1]
        r = centroid + self.alpha * (centroid - worst)
        e = centroid + self.gamma * (r - centroid)
        oc = centroid + self.rho * (r - centroid)
        ic = centroid - self.rho * (centroid - worst)
        self._cand = np.clip(np.stack([r, e, oc, ic], axis=1), 0.0, 1.0)
        return self._cand.reshape(-1, self.d)

    def accept(self, values):
        """Apply the Nelder-Mead rules; returns rows that need a shrink step."""
        v = values.reshape(-1, 4)
        fr, fe, foc, fic = v.T
        best, second, worst = self.values[:, 0], self.values[:, -2], self.values[:, -1]
        new_pt = np.full(fr.shape, -1)
        new_pt[fr < best] = np.where(fe[fr < best] < fr[fr < best], 1, 0)
        mid = (fr >= best) & (fr < second)
        new_pt[mid] = 0
        outside = (fr >= second) & (fr < worst)
        new_pt[outside & (foc <= fr)] = 2
        inside = fr >= worst
        new_pt[inside & (fic < worst)] = 3
        rows = np.flatnonzero(new_pt >= 0)
        self.simplex[rows, -1] = self._cand[rows, new_pt[rows]]
        self.values[rows, -1] = v[rows, new_pt[rows]]
        shrink = np.flatnonzero(new_pt < 0)
        if shrink.size:
            best_pt = self.simplex[shrink, :1]
            self.simplex[shrink, 1:] = best_pt + self.sigma * (self.simplex[shrink, 1:] - best_pt)
        self._sort()
        return shrink

    def shrink_points(self, rows):
        return self.simplex[rows, 1:].reshape(-1, self.d)

    def set_shrunk(self, rows, values):
        self.values[rows, 1:] = values.reshape(len(rows), self.d)
        self._sort()

    def converged(self, xatol, fatol):
        size = np.abs(self.simplex[:, 1:] - self.simplex[:, :1]).max(axis=(1, 2))
        spread = np.abs(self.values[:, 1:] - self.values[:, :1]).max(axis=1)
        return (size <= xatol) & (spread <= fatol)

    def best(self):
        return self.simplex[:, 0], self.values[:, 0]


def falsify_bounds(
    model: SystemModel,
    spec: ReachSpec,
    bounds: SensitivityBounds,
    cfg: IntegratorConfig | None = None,
    max_iters: int = 20,
    *,
    starts: int = 5,
    max_nm_iters: int | None = None,
    noise_rtol: float = 1e-7,
    rng: np.random.Generator | int | None = None,
) -> tuple[SensitivityBounds, FalsificationReport]:
    """Enlarge sampled bounds by local search for violating ``(x0, p)``.

    One iteration runs ``starts`` bounded Nelder-Mead searches for each of
    the ``s^x`` and ``s^p`` objectives from fresh random points. A search
    falsifies the bounds when its best point has a sensitivity entry outside
    them by more than ``noise_rtol * (1 + |center|)``; the bounds are then
    stretched elementwise to cover the sensitivity at the overall minimizer.
    An objective stops once an iteration fails to falsify it (a minimum of
    exactly 0 counts as not falsified).
    """
    spec.check(model)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if bounds.n != model.n or bounds.q != model.q:
        raise ValueError("bounds dimensions do not match the model")
    if bounds.horizon != (float(spec.t0), float(spec.T)):
        raise ValueError(f"bounds horizon {bounds.horizon} does not match spec ({spec.t0}, {spec.T})")
    rng = np.random.default_rng(rng)
    n = model.n
    lo, hi = _box_arrays(spec)
    free = np.flatnonzero(hi > lo)
    d = free.size
    if max_nm_iters is None:
        max_nm_iters = 30 * max(d, 1) + 60

    used = 0

    def evaluate(u):
        nonlocal used
        pts = np.tile(lo, (len(u), 1))
        pts[:, free] = lo[free] + np.clip(u, 0.0, 1.0) * (hi[free] - lo[free])
        _, sx, sp = _sensitivities(model, spec, pts, cfg)
        used += len(u)
        return pts, sx, sp

    def objectives(sx, sp, b):
        fx = falsification_objective(b.sx, sx)
        fp = falsification_objective(b.sp, sp) if b.q else np.full(len(sx), np.inf)
        if not (np.all(np.isfinite(fx)) and np.all(~np.isnan(fp))):
            raise FloatingPointError("non-finite falsification objective")
        return fx, fp

    active = {"sx": True, "sp": bounds.q > 0}
    enlargements = 0
    iterations = 0
    final_min = np.inf
    current = bounds

    if d == 0:
        # a single point: its sensitivity is all there is
        _, sx, sp = evaluate(np.zeros((1, 0)))
        fx, fp = objectives(sx, sp, current)
        out_x = _escapes(current.sx, sx, noise_rtol)[0]
        out_p = current.q > 0 and _escapes(current.sp, sp, noise_rtol)[0]
        if out_x or out_p:
            current = current.enlarge(sx[0] if out_x else None, sp[0] if out_p else None)
            enlargements += 1
        return current, FalsificationReport(1, float(min(fx[0], fp[0])), enlargements, used)

    while iterations < max_iters and (active["sx"] or active["sp"]):
        iterations += 1
        kinds = [k for k in ("sx", "sp") if active[k]]
        runs = {k: _LockstepNelderMead(rng.random((starts, d))) for k in kinds}
        # remember the sensitivities at each run's best point
        best_s = {}

        def batch_eval(points_by_kind):
            sizes = {k: len(v) for k, v in points_by_kind.items()}
            allpts = np.concatenate(list(points_by_kind.values()))
            _, sx, sp = evaluate(allpts)
            fx, fp = objectives(sx, sp, current)
            out, off = {}, 0
            for k, m in sizes.items():
                sl = slice(off, off + m)
                out[k] = (fx[sl] if k == "sx" else fp[sl], sx[sl], sp[sl])
                off += m
            return out

        def record(k, u, vals, sx, sp):
            s = sx if k == "sx" else sp
            for r, (pt, v) in enumerate(zip(u.reshape(starts, -1, d), vals.reshape(starts, -1))):
                j = int(np.argmin(v))
                if r not in best_s.setdefault(k, {}) or v[j] < best_s[k][r][0]:
                    best_s[k][r] = (v[j], s.reshape(starts, -1, *s.shape[1:])[r, j])

        init = {k: nm.initial_points() for k, nm in runs.items()}
        res = batch_eval(init)
        for k, nm in runs.items():
            nm.set_initial(res[k][0])
            record(k, init[k], *res[k])

        for _ in range(max_nm_iters):
            live = {k: nm for k, nm in runs.items() if not nm.converged(1e-4, 1e-10).all()}
            if not live:
                break
            props = {k: nm.proposals() for k, nm in live.items()}
            res = batch_eval(props)
            shrinks = {}
            for k, nm in live.items():
                record(k, props[k], *res[k])
                rows = nm.accept(res[k][0])
                if rows.size:
                    shrinks[k] = rows
            if shrinks:
                spts = {k: runs[k].shrink_points(rows) for k, rows in shrinks.items()}
                sres = batch_eval({k: spts[k] for k in shrinks})
                for k, rows in shrinks.items():
                    runs[k].set_shrunk(rows, sres[k][0])
                    vals = sres[k][0].reshape(len(rows), -1)
                    s = sres[k][1] if k == "sx" else sres[k][2]
                    s = s.reshape(len(rows), -1, *s.shape[1:])
                    for a, r in enumerate(rows):
                        j = int(np.argmin(vals[a]))
                        if vals[a, j] < best_s[k][r][0]:
                            best_s[k][r] = (vals[a, j], s[a, j])

        round_min = np.inf
        new_sx = new_sp = None
        for k in kinds:
            val, s = min(best_s[k].values(), key=lambda e: e[0])
            round_min = min(round_min, float(val))
            part = current.sx if k == "sx" else current.sp
            if val < 0.0 and _escapes(part, s[None], noise_rtol)[0]:
                if k == "sx":
                    new_sx = s
                else:
                    new_sp = s
            else:
                active[k] = False
        final_min = round_min
        if new_sx is not None or new_sp is not None:
            current = current.enlarge(new_sx, new_sp)
            enlargements += 1

    # an objective still active after max_iters was falsified on the last round
    return current, FalsificationReport(iterations, float(final_min), enlargements, used)
