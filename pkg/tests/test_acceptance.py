"""Acceptance criteria, one test each.

Every test states its measured values in a summary line printed at the end
of the run (see ``conftest.py``). Expensive experiment runs are shared
through session fixtures; each criterion's runtime budget is charged with
the wall time of the runs it depends on plus its own work.
"""
import time

import numpy as np
import pytest
from scipy.linalg import expm

from oracles import MATRIX_OPS, SCALAR_OPS, column_relative_error, enclosure_violations, fd_sensitivities
from sensreach.bounds import SensitivityBounds
from sensreach.bounds.taylor import InfeasibleOrderError, jacobian_bounds, minimal_taylor_order
from sensreach.cli import benchmark_suite, run_experiment
from sensreach.integrate import flow, integrate_augmented
from sensreach.interval import IntervalMatrix, IntervalVector
from sensreach.models import ReachSpec, default_spec, get_model, linear_model
from sensreach.reach import overapprox_bounded, overapprox_discrete, overapprox_sign_stable, tightness_check

SUITE = dict(benchmark_suite())
FRESH_SEED = 2024


class _Runs:
    """Experiment results computed once per session, with their wall time."""

    def __init__(self):
        self._cache = {}

    def get(self, name):
        if name not in self._cache:
            t = time.perf_counter()
            res = run_experiment(SUITE[name], name=name)
            self._cache[name] = (res, time.perf_counter() - t)
        return self._cache[name]


@pytest.fixture(scope="session")
def runs():
    return _Runs()


def _check_budget(seconds, limit):
    assert seconds < limit, f"took {seconds:.1f} s, budget {limit} s"


@pytest.mark.criterion(1, "traffic3 interval-arith order 7: 1e4 Monte-Carlo successors inside the compensated interval")
def test_guaranteed_containment(runs, record_property):
    res, secs = runs.get("traffic3_interval")
    assert res.config.mc_samples == 10_000 and res.config.taylor_order == 7
    iv = res.overapprox.interval
    raw_out = int((~res.overapprox.contains(res.successors)).sum())
    violations = round((1.0 - res.contained_fraction) * len(res.successors))
    record_property(
        "detail",
        f"{violations} violations of {len(res.successors)} (without integration allowance: {raw_out}); "
        f"method={res.overapprox.method}; {secs:.1f} s",
    )
    assert not res.bounds.all_sign_stable() and res.overapprox.method == "bounded"
    assert np.all(iv.lo <= iv.hi)
    assert violations == 0
    _check_budget(secs, 120)


@pytest.mark.criterion(2, "sampled+falsified bounds: 1e3 fresh successors inside on traffic3, traffic11, satellite")
def test_sampled_containment(runs, record_property):
    parts, total, fractions = [], 0.0, {}
    for model in ("traffic3", "traffic11", "satellite"):
        res, secs = runs.get(f"{model}_sampling")
        t = time.perf_counter()
        frac, _ = tightness_check(
            res.config.model, res.config.spec, res.overapprox, 1000, rng=FRESH_SEED, include_corners=False
        )
        secs += time.perf_counter() - t
        total += secs
        fractions[model] = frac
        parts.append(f"{model} {frac:.4f} ({res.bounds.n_unstable()} unstable, {res.overapprox.method})")
    record_property("detail", "; ".join(parts) + f"; {total:.0f} s")
    assert all(f == 1.0 for f in fractions.values()), fractions
    _check_budget(total, 600)


@pytest.mark.criterion(3, "traffic3 volume ratios: sign-stable in [1.4, 2.1], interval-arith in [3.5, 7.0]")
def test_traffic3_volume_ratios(runs, record_property):
    a, ta = runs.get("traffic3_sampling")
    b, tb = runs.get("traffic3_interval")
    record_property(
        "detail",
        f"sign-stable ratio {a.volume_ratio:.3f}, interval-arith ratio {b.volume_ratio:.3f} "
        f"(reachable volume by {a.volume_estimate.method}); {ta + tb:.1f} s",
    )
    assert 1.4 <= a.volume_ratio <= 2.1
    assert 3.5 <= b.volume_ratio <= 7.0
    _check_budget(ta + tb, 180)


@pytest.mark.criterion(4, "traffic11 interval-arith volume / sampled-bounds volume in [20, 200]")
def test_traffic11_volume_ratio(runs, record_property):
    a, ta = runs.get("traffic11_sampling")
    b, tb = runs.get("traffic11_interval")
    ratio = b.overapprox.interval.volume / a.overapprox.interval.volume
    record_property(
        "detail",
        f"ratio {ratio:.4g} (order {b.config.taylor_order}, {b.bounds.n_unstable()} unstable entries); {ta + tb:.0f} s",
    )
    assert 20.0 <= ratio <= 200.0
    _check_budget(ta + tb, 900)


@pytest.mark.criterion(5, "sign stability: traffic3, traffic11 fully stable; satellite 7-11 of 20 entries unstable")
def test_sign_stability_pattern(runs, record_property):
    counts, total = {}, 0.0
    for model in ("traffic3", "traffic11", "satellite"):
        res, secs = runs.get(f"{model}_sampling")
        counts[model] = res.bounds.n_unstable()
        total += secs
    sat = runs.get("satellite_sampling")[0].bounds
    size = sat.sx.lo.size + sat.sp.lo.size
    record_property(
        "detail",
        ", ".join(f"{m} {c} unstable" for m, c in counts.items()) + f" (satellite of {size}); {total:.0f} s",
    )
    assert counts["traffic3"] == 0 and counts["traffic11"] == 0
    assert size == 20 and 7 <= counts["satellite"] <= 11
    _check_budget(total, 600)


@pytest.mark.criterion(6, "satellite minimal Taylor order at dt = 5520 s exceeds 1e4 and the run reports it")
def test_satellite_taylor_infeasible(record_property):
    t = time.perf_counter()
    model, spec = get_model("satellite"), default_spec("satellite")
    order = minimal_taylor_order(jacobian_bounds(model, model.invariant_box, spec.P), spec.dt)
    with pytest.raises(InfeasibleOrderError) as err:
        run_experiment(SUITE["satellite_interval"], name="satellite_interval")
    secs = time.perf_counter() - t
    record_property("detail", f"minimal order {order}; run_experiment: {err.value}; {secs:.2f} s")
    assert spec.dt == 5520.0
    assert order > 10_000 and err.value.minimal == order
    _check_budget(secs, 10)


@pytest.mark.criterion(7, "augmented sensitivities match central finite differences at 20 points per model, rtol 1e-3")
def test_sensitivities_vs_finite_differences(record_property):
    t = time.perf_counter()
    worst = {}
    for name in ("traffic3", "traffic11", "satellite"):
        model, spec = get_model(name), default_spec(name)
        rng = np.random.default_rng(FRESH_SEED)
        lo = np.concatenate([spec.X0.lo, spec.P.lo])
        hi = np.concatenate([spec.X0.hi, spec.P.hi])
        err = 0.0
        for _ in range(20):
            z = lo + rng.random(lo.size) * (hi - lo)
            x0, p = z[: model.n], z[model.n :]
            st = integrate_augmented(model, spec.t0, spec.T, x0, p)
            fdx, fdp = fd_sensitivities(model, spec, x0, p)
            err = max(err, column_relative_error(st.sx, fdx).max(), column_relative_error(st.sp, fdp).max())
        worst[name] = err
    secs = time.perf_counter() - t
    record_property("detail", ", ".join(f"{m} max rel err {e:.2e}" for m, e in worst.items()) + f"; {secs:.0f} s")
    assert max(worst.values()) < 1e-3
    _check_budget(secs, 120)


def _random_linear_case(rng):
    n, q = int(rng.integers(1, 5)), int(rng.integers(1, 3))
    A = rng.normal(0.0, 0.5, (n, n))
    B = rng.normal(0.0, 1.0, (n, q))
    dt = float(rng.uniform(0.2, 2.0))
    # exact sensitivities from the block exponential of [[A, B], [0, 0]]
    M = np.zeros((n + q, n + q))
    M[:n, :n], M[:n, n:] = A, B
    E = expm(dt * M)
    sx, sp = E[:n, :n], E[:n, n:]
    # widen each entry by less than its magnitude: signs stay fixed
    wx = rng.uniform(0.0, 0.9, sx.shape) * np.abs(sx)
    wp = rng.uniform(0.0, 0.9, sp.shape) * np.abs(sp)
    bounds = SensitivityBounds(IntervalMatrix(sx - wx, sx + wx), IntervalMatrix(sp - wp, sp + wp), False, (0.0, dt))
    x_lo, p_lo = rng.uniform(-2, 2, n), rng.uniform(-2, 2, q)
    spec = ReachSpec(
        0.0, dt, IntervalVector(x_lo, x_lo + rng.uniform(0.1, 1.0, n)), IntervalVector(p_lo, p_lo + rng.uniform(0.1, 1.0, q))
    )
    return linear_model(A, B), spec, bounds


@pytest.mark.criterion(8, "bounded and sign-stable constructions bit-identical on 50 random linear systems")
def test_bounded_reduces_to_sign_stable(record_property):
    t = time.perf_counter()
    rng = np.random.default_rng(FRESH_SEED)
    identical = 0
    for _ in range(50):
        model, spec, bounds = _random_linear_case(rng)
        assert bounds.all_sign_stable()
        a = overapprox_sign_stable(model, spec, bounds)
        b = overapprox_bounded(model, spec, bounds)
        same = np.array_equal(a.interval.lo, b.interval.lo) and np.array_equal(a.interval.hi, b.interval.hi)
        identical += same and b.tight
    secs = time.perf_counter() - t
    record_property("detail", f"{identical}/50 identical; {secs:.1f} s")
    assert identical == 50
    _check_budget(secs, 30)


@pytest.mark.criterion(9, "discrete construction on the flow map equals the bounded construction on traffic3")
def test_discrete_map_equivalence(runs, record_property):
    res, secs = runs.get("traffic3_sampling")
    t = time.perf_counter()
    model, spec, bounds = res.config.model, res.config.spec, res.bounds

    def F(t0, x, p):
        return flow(model, t0, spec.T, x, p)

    d = overapprox_discrete(F, (bounds.sx, bounds.sp), spec.t0, spec.X0, spec.P)
    b = overapprox_bounded(model, spec, bounds)
    secs += time.perf_counter() - t
    lo_eq = np.array_equal(d.interval.lo, b.interval.lo)
    hi_eq = np.array_equal(d.interval.hi, b.interval.hi)
    record_property("detail", f"lower faces equal: {lo_eq}, upper faces equal: {hi_eq}; {secs:.1f} s")
    assert lo_eq and hi_eq
    assert np.array_equal(d.per_dim_slack, b.per_dim_slack) and d.phi_evals == b.phi_evals
    _check_budget(secs, 60)


@pytest.mark.criterion(10, "traffic3 sign-stable result: every face gap below 5% of the interval width")
def test_traffic3_tightness(runs, record_property):
    res, secs = runs.get("traffic3_sampling")
    t = time.perf_counter()
    frac, gaps = tightness_check(res.config.model, res.config.spec, res.overapprox, 1000, rng=FRESH_SEED)
    secs += time.perf_counter() - t
    rel = gaps / res.overapprox.interval.width[:, None]
    record_property("detail", f"largest gap {rel.max():.2e} of width, contained {frac:.4f}; {secs:.1f} s")
    assert res.overapprox.tight
    assert np.all(rel < 0.05)
    _check_budget(secs, 60)


@pytest.mark.criterion(11, "interval kernel enclosure: 1e4 random cases per operation, zero violations")
def test_interval_enclosure_suite(record_property):
    t = time.perf_counter()
    bad = {op: enclosure_violations(op, 10_000, seed=FRESH_SEED) for op in SCALAR_OPS + MATRIX_OPS}
    secs = time.perf_counter() - t
    record_property("detail", f"{sum(bad.values())} violations over {len(bad)} operations; {secs:.1f} s")
    assert sum(bad.values()) == 0, bad
    _check_budget(secs, 10)
