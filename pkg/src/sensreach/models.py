"""ODE system abstraction and built-in benchmark models.

All model callables are vectorized over leading axes: ``f(t, x, p)`` takes
``x`` of shape ``(..., n)`` and ``p`` of shape ``(..., q)`` and returns
``(..., n)``; ``jac_x`` returns ``(..., n, n)`` and ``jac_p`` ``(..., n, q)``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
import yaml

from .interval import (
    Interval,
    IntervalMatrix,
    IntervalVector,
    add_hi,
    add_lo,
    _mul_arrays,
    iv_add,
    iv_div,
    iv_mul,
    iv_neg,
    iv_sqr,
)

__all__ = [
    "SystemModel",
    "ReachSpec",
    "ExperimentConfig",
    "ConfigError",
    "linear_model",
    "model_traffic3",
    "model_traffic_n",
    "model_satellite",
    "get_model",
    "default_spec",
    "load_config",
    "model_from_config",
    "TRAFFIC_PARAMS",
    "SATELLITE_RANGES",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


JacRange = Callable[[IntervalVector | None, IntervalVector], tuple[IntervalMatrix, IntervalMatrix]]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Uncertain ODE ``dx/dt = f(t, x, p)`` with analytic Jacobians.

    ``jac_range(box, P)`` returns interval matrices enclosing ``jac_x`` and
    ``jac_p`` over ``box x P``; ``box=None`` asks for bounds valid over the
    whole state space, which only some models can provide.
    """

    name: str
    n: int
    q: int
    f: Callable[..., np.ndarray]
    jac_x: Callable[..., np.ndarray]
    jac_p: Callable[..., np.ndarray]
    invariant_box: IntervalVector | None = None
    jac_range: JacRange | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    # optional joint evaluation (f, jac_x, jac_p), for models that share work between them
    derivatives: Callable[..., tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if self.n < 1 or self.q < 0:
            raise ValueError(f"bad dimensions n={self.n}, q={self.q}")
        if self.invariant_box is not None and len(self.invariant_box) != self.n:
            raise ValueError("invariant box dimension does not match n")

    def __repr__(self):
        return f"SystemModel(name={self.name!r}, n={self.n}, q={self.q})"


@dataclass(frozen=True, eq=False)
class ReachSpec:
    """Initial time, horizon, initial box and parameter box."""

    t0: float
    T: float
    X0: IntervalVector
    P: IntervalVector

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "T", float(self.T))
        if not (math.isfinite(self.t0) and math.isfinite(self.T)):
            raise ValueError("t0 and T must be finite")
        if self.T < self.t0:
            raise ValueError(f"horizon T={self.T} precedes t0={self.t0}")
        if not isinstance(self.X0, IntervalVector):
            object.__setattr__(self, "X0", IntervalVector.from_pairs(self.X0))
        if not isinstance(self.P, IntervalVector):
            object.__setattr__(self, "P", IntervalVector.from_pairs(self.P))

    @property
    def dt(self) -> float:
        return self.T - self.t0

    def check(self, model: SystemModel) -> "ReachSpec":
        if len(self.X0) != model.n:
            raise ValueError(f"X0 has {len(self.X0)} components, model {model.name} has n={model.n}")
        if len(self.P) != model.q:
            raise ValueError(f"P has {len(self.P)} components, model {model.name} has q={model.q}")
        return self

    def to_dict(self) -> dict:
        return {"t0": self.t0, "T": self.T, "X0": self.X0.to_pairs(), "P": self.P.to_pairs()}


# ---------------------------------------------------------------------------
# linear test systems
# ---------------------------------------------------------------------------

def linear_model(A, B=None, name: str = "linear") -> SystemModel:
    """``dx/dt = A x + B p`` with constant matrices."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.array(B, dtype=float).reshape(n, -1)
    q = B.shape[1]

    def f(t, x, p):
        return x @ A.T + p @ B.T

    def jac_x(t, x, p):
        return np.broadcast_to(A, np.shape(x)[:-1] + (n, n)).copy()

    def jac_p(t, x, p):
        return np.broadcast_to(B, np.shape(x)[:-1] + (n, q)).copy()

    def jac_range(box, P):
        return IntervalMatrix.point(A), IntervalMatrix.point(B)

    return SystemModel(name, n, q, f, jac_x, jac_p, None, jac_range, {"A": A.tolist(), "B": B.tolist()})


# ---------------------------------------------------------------------------
# piecewise-affine min networks (traffic models)
# ---------------------------------------------------------------------------

class _MinNetwork:
    """``f(x, p) = (Lx x + Lp p + W @ m(x, p)) / tau`` with each ``m_k`` a
    minimum over affine branches ``ax . x + ap . p + c``.

    Branch lists are padded with ``+inf`` constants so every term is handled
    by one tensor operation. At ties the lowest-index branch is active.
    """

    def __init__(self, n, q, terms, weights, Lx, Lp, tau):
        self.n, self.q = n, q
        nb = max(len(t) for t in terms)
        K = len(terms)
        self.ax = np.zeros((K, nb, n))
        self.ap = np.zeros((K, nb, q))
        self.c = np.full((K, nb), np.inf)
        self.valid = np.zeros((K, nb), dtype=bool)
        for k, branches in enumerate(terms):
            for b, (ax, ap, c) in enumerate(branches):
                self.ax[k, b] = ax
                self.ap[k, b] = ap
                self.c[k, b] = c
                self.valid[k, b] = True
        self.W = np.asarray(weights, dtype=float)  # (n, K)
        self.Lx = np.asarray(Lx, dtype=float)
        self.Lp = np.asarray(Lp, dtype=float)
        self.tau = float(tau)
        # flattened branch coefficients: one matmul evaluates every branch
        self._axf = self.ax.reshape(K * nb, n).T.copy()
        self._apf = self.ap.reshape(K * nb, q).T.copy()
        self._cf = self.c.reshape(-1)

    def _branch_values(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        vals = x @ self._axf + p @ self._apf + self._cf
        return vals.reshape(vals.shape[:-1] + self.c.shape)

    def f(self, t, x, p):
        vals = self._branch_values(x, p)
        m = vals.min(axis=-1)
        return (x @ self.Lx.T + np.asarray(p, float) @ self.Lp.T + m @ self.W.T) / self.tau

    def _active_grads(self, vals):
        act = vals.argmin(axis=-1)  # (..., K), first index on ties
        K = self.c.shape[0]
        gx = self.ax[np.arange(K), act]  # (..., K, n)
        gp = self.ap[np.arange(K), act]
        return gx, gp

    def jac_x(self, t, x, p):
        gx, _ = self._active_grads(self._branch_values(x, p))
        return (self.Lx + self.W @ gx) / self.tau

    def jac_p(self, t, x, p):
        _, gp = self._active_grads(self._branch_values(x, p))
        return (self.Lp + self.W @ gp) / self.tau

    def derivatives(self, t, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        vals = self._branch_values(x, p)
        gx, gp = self._active_grads(vals)
        f = (x @ self.Lx.T + p @ self.Lp.T + vals.min(axis=-1) @ self.W.T) / self.tau
        return f, (self.Lx + self.W @ gx) / self.tau, (self.Lp + self.W @ gp) / self.tau

    def kink_distance(self, x, p):
        """Gap between the smallest and second-smallest branch of each term."""
        vals = np.sort(self._branch_values(x, p), axis=-1)
        gap = vals[..., 1] - vals[..., 0]
        return np.where(np.isfinite(gap), gap, np.inf).min(axis=-1)

    def jac_range(self, box, P):
        """Hull of branch gradients over the branches that can be active."""
        cand = self.valid.copy()
        if box is not None:
            # interval value of every affine branch over box x P
            lo = self.c.copy()
            hi = self.c.copy()
            for arr, B in ((self.ax, box), (self.ap, P)):
                a_lo = np.where(arr >= 0, arr * B.lo, arr * B.hi).sum(axis=-1)
                a_hi = np.where(arr >= 0, arr * B.hi, arr * B.lo).sum(axis=-1)
                lo = lo + a_lo
                hi = hi + a_hi
            slack = 1e-9 * (1.0 + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
            min_hi = np.where(self.valid, hi, np.inf).min(axis=-1, keepdims=True)
            cand &= lo - slack <= min_hi
        big = np.where(cand[..., None], 0.0, np.inf)
        gx_lo = np.min(self.ax + big, axis=1)  # (K, n)
        gx_hi = np.max(self.ax - big, axis=1)
        gp_lo = np.min(self.ap + big, axis=1)
        gp_hi = np.max(self.ap - big, axis=1)
        s = iv_div(Interval(1.0, 1.0), Interval(self.tau, self.tau))
        A = self._combine(self.Lx, gx_lo, gx_hi, s)
        Bm = self._combine(self.Lp, gp_lo, gp_hi, s)
        return A, Bm

    def _combine(self, L, g_lo, g_hi, s):
        lo = L.copy()
        hi = L.copy()
        for k in range(self.W.shape[1]):
            w = self.W[:, k][:, None]
            t_lo, t_hi = _mul_arrays(w, w, g_lo[k][None, :], g_hi[k][None, :])
            lo = add_lo(lo, t_lo)
            hi = add_hi(hi, t_hi)
        lo, hi = _mul_arrays(s.lo, s.hi, lo, hi)
        return IntervalMatrix(lo, hi)


TRAFFIC_PARAMS = {"T": 30.0, "c": 40.0, "v": 0.5, "xbar": 320.0, "w": 1.0 / 6.0, "beta": 0.75}


def _unit(n, i, coef):
    a = np.zeros(n)
    a[i] = coef
    return a


def _diverge_term(n, q, c, v, xbar, w):
    """g(x) = min(c, v x1, 2w(xbar - x2), 2w(xbar - x3))."""
    zp = np.zeros(q)
    return [
        (np.zeros(n), zp, c),
        (_unit(n, 0, v), zp, 0.0),
        (_unit(n, 1, -2 * w), zp, 2 * w * xbar),
        (_unit(n, 2, -2 * w), zp, 2 * w * xbar),
    ]


def _build_traffic(n_links: int, name: str) -> SystemModel:
    prm = TRAFFIC_PARAMS
    n, q = n_links, 1
    c, v, xbar, w, beta = prm["c"], prm["v"], prm["xbar"], prm["w"], prm["beta"]
    zp = np.zeros(q)
    terms = [_diverge_term(n, q, c, v, xbar, w)]
    # h_i = h(x_i, x_{i+2}) for links i = 2..n (0-based 1..n-1)
    h_index = {}
    for i in range(1, n):
        branches = [(np.zeros(n), zp, c), (_unit(n, i, v), zp, 0.0)]
        if i + 2 < n:
            branches.append((_unit(n, i + 2, -w / beta), zp, w / beta * xbar))
        h_index[i] = len(terms)
        terms.append(branches)
    W = np.zeros((n, len(terms)))
    W[0, 0] = -1.0
    for i in range(1, n):
        if i in (1, 2):
            W[i, 0] = 0.5
        else:
            W[i, h_index[i - 2]] = beta
        W[i, h_index[i]] = -1.0
    Lx = np.zeros((n, n))
    Lp = np.zeros((n, q))
    Lp[0, 0] = 1.0
    net = _MinNetwork(n, q, terms, W, Lx, Lp, prm["T"])
    return SystemModel(
        name=name,
        n=n,
        q=q,
        f=net.f,
        jac_x=net.jac_x,
        jac_p=net.jac_p,
        invariant_box=None,
        jac_range=net.jac_range,
        params={**prm, "n_links": n_links, "kink_distance": net.kink_distance},
        derivatives=net.derivatives,
    )


def model_traffic3() -> SystemModel:
    """Three-link diverge junction: link 1 splits evenly into links 2 and 3."""
    return _build_traffic(3, "traffic3")


def model_traffic_n(n_links: int) -> SystemModel:
    """Diverge junction followed by two chains 2->4->6... and 3->5->7...

    Each downstream link passes a fraction ``beta`` of its outflow on.
    ``n_links=3`` reproduces :func:`model_traffic3`.
    """
    if isinstance(n_links, bool) or int(n_links) != n_links:
        raise ValueError(f"n_links must be an integer, got {n_links!r}")
    n_links = int(n_links)
    if n_links < 3 or n_links % 2 == 0:
        raise ValueError(f"n_links must be odd and >= 3, got {n_links}")
    return _build_traffic(n_links, f"traffic{n_links}")


# ---------------------------------------------------------------------------
# satellite orbit
# ---------------------------------------------------------------------------

# km, s, km^3/s^2
SATELLITE_RANGES = {
    "radius": (6.7718e3, 6.7845e3),
    "mu": (3.9779e5, 3.9938e5),
}


def _sat_f(t, x, p):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(p, dtype=float)[..., 0]
    r, vr, th, om = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack([vr, -mu / r**2 + r * om**2, om, -2.0 * vr * om / r], axis=-1)


def _sat_jac_x(t, x, p):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(p, dtype=float)[..., 0]
    r, vr, om = x[..., 0], x[..., 1], x[..., 3]
    J = np.zeros(x.shape[:-1] + (4, 4))
    J[..., 0, 1] = 1.0
    J[..., 1, 0] = 2.0 * mu / r**3 + om**2
    J[..., 1, 3] = 2.0 * r * om
    J[..., 2, 3] = 1.0
    J[..., 3, 0] = 2.0 * vr * om / r**2
    J[..., 3, 1] = -2.0 * om / r
    J[..., 3, 3] = -2.0 * vr / r
    return J


def _sat_jac_p(t, x, p):
    x = np.asarray(x, dtype=float)
    r = x[..., 0]
    J = np.zeros(x.shape[:-1] + (4, 1))
    J[..., 1, 0] = -1.0 / r**2
    return J


def _sat_jac_range(box, P):
    if box is None:
        raise ValueError("satellite Jacobian bounds need a bounded state box")
    r, vr, om = box[0], box[1], box[3]
    mu = P[0]
    if r.lo <= 0.0 <= r.hi:
        raise ValueError(f"radius interval {r} contains 0; outside the model domain")
    two = Interval.point(2.0)
    r2 = iv_sqr(r)
    r3 = iv_mul(r2, r)
    z = Interval.point(0.0)
    one = Interval.point(1.0)
    a = [[z] * 4 for _ in range(4)]
    a[0][1] = one
    a[1][0] = iv_add(iv_div(iv_mul(two, mu), r3), iv_sqr(om))
    a[1][3] = iv_mul(iv_mul(two, r), om)
    a[2][3] = one
    a[3][0] = iv_div(iv_mul(iv_mul(two, vr), om), r2)
    a[3][1] = iv_neg(iv_div(iv_mul(two, om), r))
    a[3][3] = iv_neg(iv_div(iv_mul(two, vr), r))
    b = [[z], [iv_neg(iv_div(one, r2))], [z], [z]]
    A = IntervalMatrix([[e.lo for e in row] for row in a], [[e.hi for e in row] for row in a])
    B = IntervalMatrix([[e.lo for e in row] for row in b], [[e.hi for e in row] for row in b])
    return A, B


def model_satellite() -> SystemModel:
    """Planar two-body orbit in polar coordinates ``(r, dr/dt, theta, dtheta/dt)``."""
    # envelope of trajectories from the default initial box over 5520 s, with margin
    box = IntervalVector.from_pairs(
        [[6.60e3, 6.95e3], [-0.2, 0.2], [-0.1, 7.0], [1.08e-3, 1.19e-3]]
    )
    return SystemModel(
        name="satellite",
        n=4,
        q=1,
        f=_sat_f,
        jac_x=_sat_jac_x,
        jac_p=_sat_jac_p,
        invariant_box=box,
        jac_range=_sat_jac_range,
        params={"units": "km, s, km^3/s^2"},
    )


# ---------------------------------------------------------------------------
# registry and configuration
# ---------------------------------------------------------------------------

def get_model(name: str) -> SystemModel:
    if name == "traffic3":
        return model_traffic3()
    if name == "satellite":
        return model_satellite()
    m = re.fullmatch(r"traffic(\d+)", name or "")
    if m:
        try:
            return model_traffic_n(int(m.group(1)))
        except ValueError as exc:
            raise ConfigError(f"unknown model {name!r}: {exc}") from exc
    raise ConfigError(f"unknown model {name!r}")


def _satellite_x0() -> IntervalVector:
    r_lo, r_hi = SATELLITE_RANGES["radius"]
    mu_lo, mu_hi = SATELLITE_RANGES["mu"]
    # interval hull of the coupled circular-orbit initial states
    return IntervalVector.from_pairs(
        [[r_lo, r_hi], [0.0, 0.0], [0.0, 0.0], [math.sqrt(mu_lo / r_hi**3), math.sqrt(mu_hi / r_lo**3)]]
    )


def default_spec(name: str) -> ReachSpec:
    """The benchmark initial/parameter boxes and horizon for a built-in model."""
    if name == "traffic3":
        return ReachSpec(0.0, 30.0, [[150, 200], [250, 320], [50, 100]], [[40, 60]])
    if name == "satellite":
        return ReachSpec(0.0, 5520.0, _satellite_x0(), [list(SATELLITE_RANGES["mu"])])
    m = re.fullmatch(r"traffic(\d+)", name)
    if m:
        n = int(m.group(1))
        return ReachSpec(0.0, 30.0, [[20, 300]] * n, [[40, 60]])
    raise ConfigError(f"unknown model {name!r}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: SystemModel
    spec: ReachSpec
    method: str = "auto"
    bounds_method: str = "sampling"
    sampling: str = "grid"
    grid_per_dim: int = 2
    random_samples: int = 100
    max_falsification_iters: int = 20
    taylor_order: int = 7
    seed: int = 0
    mc_samples: int = 10_000
    plot_dims: tuple[int, int] = (1, 3)
    raw: Mapping[str, Any] = field(default_factory=dict)


_METHODS = ("auto", "sign-stable", "bounded")
_BOUNDS = ("sampling", "interval-arith")


def _parse_doc(doc) -> dict:
    if isinstance(doc, Mapping):
        return dict(doc)
    if not isinstance(doc, str):
        raise ConfigError(f"config must be text or a mapping, got {type(doc).__name__}")
    try:
        data = yaml.safe_load(doc)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    return data


def _box(value, dim, key) -> IntervalVector:
    try:
        box = IntervalVector.from_pairs(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a list of [lo, hi] pairs: {exc}") from exc
    if len(box) != dim:
        raise ConfigError(f"{key} has {len(box)} components, expected {dim}")
    return box


def load_config(doc) -> ExperimentConfig:
    """Parse a YAML/JSON experiment document (text or mapping)."""
    data = _parse_doc(doc)
    if "model" not in data:
        raise ConfigError("config is missing the 'model' key")
    model = get_model(str(data["model"]))
    base = default_spec(model.name)
    X0 = _box(data["X0"], model.n, "X0") if "X0" in data else base.X0
    P = _box(data["P"], model.q, "P") if "P" in data else base.P
    try:
        spec = ReachSpec(float(data.get("t0", base.t0)), float(data.get("T", base.T)), X0, P)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    method = data.get("method", "auto")
    if method not in _METHODS:
        raise ConfigError(f"method must be one of {_METHODS}, got {method!r}")
    bounds_method = data.get("bounds_method", "sampling")
    if bounds_method not in _BOUNDS:
        raise ConfigError(f"bounds_method must be one of {_BOUNDS}, got {bounds_method!r}")
    sampling = data.get("sampling", "grid" if "random_samples" not in data else "random")
    if sampling not in ("grid", "random"):
        raise ConfigError(f"sampling must be 'grid' or 'random', got {sampling!r}")
    dims = tuple(int(d) for d in data.get("plot_dims", (1, 3)))
    if len(dims) != 2:
        raise ConfigError("plot_dims must have two entries")
    try:
        return ExperimentConfig(
            model=model,
            spec=spec,
            method=method,
            bounds_method=bounds_method,
            sampling=sampling,
            grid_per_dim=int(data.get("grid_per_dim", 2)),
            random_samples=int(data.get("random_samples", 100)),
            max_falsification_iters=int(data.get("max_falsification_iters", 20)),
            taylor_order=int(data.get("taylor_order", 7)),
            seed=int(data.get("seed", 0)),
            mc_samples=int(data.get("mc_samples", 10_000)),
            plot_dims=dims,
            raw=json.loads(json.dumps(data, default=str)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad option value: {exc}") from exc


def model_from_config(doc) -> tuple[SystemModel, ReachSpec]:
    cfg = load_config(doc)
    return cfg.model, cfg.spec
