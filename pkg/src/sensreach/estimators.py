"""Estimator-style wrappers (fit / predict / get_params).

Fitting takes the initial box ``X0`` and parameter box ``P`` as arrays of
``[lo, hi]`` rows. The bound estimators produce ``bounds_``; the reach
estimator produces the over-approximating ``interval_`` and predicts
membership of candidate successor states.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_box, check_model, check_points
from .bounds.sampling import Grid, RandomSamples, falsify_bounds, sample_bounds
from .bounds.taylor import InfeasibleOrderError, jacobian_bounds, minimal_taylor_order, taylor_sensitivity_bounds
from .models import ReachSpec
from .reach import overapprox_bounded, overapprox_sign_stable, tightness_check

__all__ = ["SamplingSensitivityBounds", "IntervalSensitivityBounds", "SensitivityReach"]


class _BoundsMixin:
    def _spec(self, X0, P):
        model = check_model(self.model)
        X0 = check_box(X0, model.n, "X0")
        P = check_box(P, model.q, "P")
        return model, ReachSpec(self.t0, self.T, X0, P)


class SamplingSensitivityBounds(_BoundsMixin, BaseEstimator):
    """Sampled (and optionally falsified) sensitivity bounds. No guarantee."""

    def __init__(self, model="traffic3", t0=0.0, T=30.0, strategy="grid", grid_per_dim=2,
                 random_samples=100, max_iters=20, random_state=None):
        self.model = model
        self.t0 = t0
        self.T = T
        self.strategy = strategy
        self.grid_per_dim = grid_per_dim
        self.random_samples = random_samples
        self.max_iters = max_iters
        self.random_state = random_state

    def fit(self, X0, P):
        model, spec = self._spec(X0, P)
        if self.strategy == "grid":
            strategy = Grid(self.grid_per_dim)
        elif self.strategy == "random":
            strategy = RandomSamples(self.random_samples)
        else:
            raise ValueError(f"strategy must be 'grid' or 'random', got {self.strategy!r}")
        rng = np.random.default_rng(self.random_state)
        bounds = sample_bounds(model, spec, strategy, rng=rng)
        self.sampled_bounds_ = bounds
        self.report_ = None
        if self.max_iters:
            bounds, self.report_ = falsify_bounds(model, spec, bounds, max_iters=self.max_iters, rng=rng)
        self.bounds_ = bounds
        self.model_ = model
        self.spec_ = spec
        return self


class IntervalSensitivityBounds(_BoundsMixin, BaseEstimator):
    """Guaranteed bounds from interval Jacobian bounds and a Taylor enclosure.

    ``box`` is the state region the Jacobian bounds must cover; ``None``
    uses the model's invariant box (or global bounds where available).
    """

    def __init__(self, model="traffic3", t0=0.0, T=30.0, order=7, box=None):
        self.model = model
        self.t0 = t0
        self.T = T
        self.order = order
        self.box = box

    def fit(self, X0, P):
        model, spec = self._spec(X0, P)
        box = model.invariant_box if self.box is None else check_box(self.box, model.n, "box")
        jb = jacobian_bounds(model, box, spec.P)
        self.minimal_order_ = minimal_taylor_order(jb, spec.dt)
        if self.order < self.minimal_order_:
            raise InfeasibleOrderError(self.order, self.minimal_order_)
        self.jacobian_bounds_ = jb
        self.bounds_ = taylor_sensitivity_bounds(jb, spec.t0, spec.T, self.order)
        self.model_ = model
        self.spec_ = spec
        return self


class SensitivityReach(BaseEstimator):
    """Interval over-approximation of the reachable set.

    ``method`` is ``"auto"`` (sign-stable construction when the fitted
    bounds allow it), ``"sign-stable"`` or ``"bounded"``.
    """

    def __init__(self, bounds=None, method="auto"):
        self.bounds = bounds
        self.method = method

    def fit(self, X0, P):
        if self.method not in ("auto", "sign-stable", "bounded"):
            raise ValueError(f"unknown method {self.method!r}")
        est = SamplingSensitivityBounds() if self.bounds is None else clone(self.bounds)
        est.fit(X0, P)
        b = est.bounds_
        if self.method == "sign-stable" or (self.method == "auto" and b.all_sign_stable()):
            res = overapprox_sign_stable(est.model_, est.spec_, b)
        else:
            res = overapprox_bounded(est.model_, est.spec_, b)
        self.bounds_estimator_ = est
        self.result_ = res
        self.interval_ = res.interval
        self.n_features_in_ = est.model_.n
        return self

    def predict(self, Y):
        """True for rows of ``Y`` inside the fitted interval."""
        check_is_fitted(self, "interval_")
        return self.result_.contains(check_points(Y, self.n_features_in_))

    def score(self, Y, y=None):
        """Fraction of rows of ``Y`` inside the fitted interval."""
        return float(np.mean(self.predict(Y)))

    def tightness(self, samples=1000, random_state=None):
        check_is_fitted(self, "interval_")
        est = self.bounds_estimator_
        return tightness_check(est.model_, est.spec_, self.result_, samples, rng=random_state)
