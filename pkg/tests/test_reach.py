import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensreach.bounds import SensitivityBounds
from sensreach.interval import IntervalMatrix, IntervalVector
from sensreach.models import ReachSpec, linear_model
from sensreach.reach import (
    NotSignStableError,
    OverApprox,
    compensation_vectors,
    corner_points,
    overapprox_bounded,
    overapprox_discrete,
    overapprox_sign_stable,
    select_vertices,
    tightness_check,
)


def bounds_from(sx, sp=None, horizon=(0.0, 1.0)):
    sx = IntervalMatrix.from_pairs(sx)
    n = sx.n_rows
    sp = IntervalMatrix.zeros(n, 0) if sp is None else IntervalMatrix.from_pairs(sp)
    return SensitivityBounds(sx, sp, False, horizon)


NO_P = IntervalVector(np.zeros(0), np.zeros(0))


def decay_spec():
    return ReachSpec(0.0, 1.0, IntervalVector([1.0], [2.0]), NO_P)


def decay():
    return linear_model([[-1.0]], np.zeros((1, 0)))


def test_select_all_positive_centers():
    X0 = IntervalVector([0.0, 1.0], [2.0, 3.0])
    sel = select_vertices(bounds_from([[(0.1, 1), (0, 2)], [(-0.1, 0.5), (3, 4)]]), X0, NO_P)
    for i in range(2):
        assert np.array_equal(sel.xi_lo[i], X0.lo) and np.array_equal(sel.xi_hi[i], X0.hi)


def test_select_flips_negative_scalar():
    X0 = IntervalVector([1.0], [2.0])
    sel = select_vertices(bounds_from([[(-2.0, -1.0)]]), X0, NO_P)
    assert sel.xi_lo[0, 0] == 2.0 and sel.xi_hi[0, 0] == 1.0


def test_select_mixed_sign_pattern():
    X0 = IntervalVector([0.0, 0.0], [1.0, 1.0])
    b = bounds_from([[(1, 2), (-2, -1)], [(1, 2), (1, 2)]])
    sel = select_vertices(b, X0, NO_P)
    assert sel.xi_lo.tolist() == [[0, 1], [0, 0]]
    assert sel.xi_hi.tolist() == [[1, 0], [1, 1]]


def test_select_rejects_wrong_dimensions():
    with pytest.raises(ValueError):
        select_vertices(bounds_from([[(0, 1)]]), IntervalVector([0, 0], [1, 1]), NO_P)


def test_compensation_cases():
    comp = compensation_vectors(bounds_from([[(0.2, 0.9), (-0.3, 0.9), (-0.9, 0.3)]] * 3))
    assert comp.c[0].tolist() == [0.0, -0.3, 0.3]
    comp = compensation_vectors(bounds_from([[(-2, -1), (0.0, 0.0)], [(1, 2), (3, 4)]]))
    assert np.all(comp.c == 0.0)


def test_scalar_decay_closed_form():
    m, spec = decay(), decay_spec()
    b = bounds_from([[(np.exp(-1) * 0.9, np.exp(-1) * 1.1)]])
    r = overapprox_sign_stable(m, spec, b)
    assert r.interval.lo[0] == pytest.approx(np.exp(-1), abs=1e-8)
    assert r.interval.hi[0] == pytest.approx(2 * np.exp(-1), abs=1e-8)
    assert r.tight and r.phi_evals == 2 and r.method == "sign-stable"


def test_sign_stable_path_rejects_unstable_bounds():
    with pytest.raises(NotSignStableError):
        overapprox_sign_stable(decay(), decay_spec(), bounds_from([[(-0.1, 1.0)]]))


def test_bounded_scalar_compensation():
    # F(x) = x^2 / 2 on [0, 1]: the bounds [-0.5, 1.5] enclose F' = x
    F = lambda t, x, p: 0.5 * x**2
    r = overapprox_discrete(F, (IntervalMatrix.from_pairs([[(-0.5, 1.5)]]), IntervalMatrix.zeros(1, 0)), 0.0,
                            IntervalVector([0.0], [1.0]), NO_P)
    assert r.interval.lo[0] == pytest.approx(0.0 - 0.5)
    assert r.interval.hi[0] == pytest.approx(0.5 + 0.5)
    assert not r.tight and r.per_dim_slack[0] == pytest.approx(0.5)


def test_bounded_equals_sign_stable_for_stable_bounds():
    m = linear_model([[-0.4, 0.2], [0.3, -0.5]], [[1.0], [0.0]])
    spec = ReachSpec(0.0, 2.0, IntervalVector([0, 1], [1, 2]), IntervalVector([0.5], [1.0]))
    b = SensitivityBounds(
        IntervalMatrix.from_pairs([[(0.3, 0.6), (0.05, 0.3)], [(0.1, 0.4), (0.3, 0.5)]]),
        IntervalMatrix.from_pairs([[(0.8, 1.5)], [(0.05, 0.3)]]), False, (0.0, 2.0),
    )
    a, c = overapprox_sign_stable(m, spec, b), overapprox_bounded(m, spec, b)
    assert np.array_equal(a.interval.lo, c.interval.lo) and np.array_equal(a.interval.hi, c.interval.hi)
    assert c.tight and a.phi_evals == c.phi_evals == 2


def test_identity_map_returns_box():
    X0 = IntervalVector([-1.0, 2.0, 0.0], [1.0, 2.5, 3.0])
    r = overapprox_discrete(lambda t, x, p: x, (IntervalMatrix.identity(3), IntervalMatrix.zeros(3, 0)), 0.0, X0, NO_P)
    assert r.interval == X0 and r.tight


@pytest.mark.parametrize("seed", range(5))
def test_linear_map_matches_vertex_hull(seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(-2, 2, (3, 3))
    lo = rng.uniform(-1, 0, 3)
    X0 = IntervalVector(lo, lo + rng.uniform(0.1, 2, 3))
    r = overapprox_discrete(lambda t, x, p: x @ M.T, (IntervalMatrix.point(M), IntervalMatrix.zeros(3, 0)), 0.0, X0, NO_P)
    verts = np.array(list(itertools.product(*zip(X0.lo, X0.hi))))
    img = verts @ M.T
    assert np.allclose(r.interval.lo, img.min(axis=0), rtol=1e-14, atol=1e-14)
    assert np.allclose(r.interval.hi, img.max(axis=0), rtol=1e-14, atol=1e-14)


def test_monotone_system_uses_two_successors():
    m = linear_model([[-0.5, 0.2], [0.3, -0.4]], [[0.5], [0.1]])
    spec = ReachSpec(0.0, 1.0, IntervalVector([0, 0], [1, 1]), IntervalVector([0], [1]))
    b = SensitivityBounds(IntervalMatrix.from_pairs([[(0.5, 0.7), (0.1, 0.2)], [(0.1, 0.3), (0.5, 0.8)]]),
                          IntervalMatrix.from_pairs([[(0.3, 0.5)], [(0.05, 0.2)]]), False, (0.0, 1.0))
    r = overapprox_sign_stable(m, spec, b)
    assert r.phi_evals == 2


def test_tightness_of_monotone_scalar_example():
    m, spec = decay(), decay_spec()
    r = overapprox_sign_stable(m, spec, bounds_from([[(0.3, 0.4)]]))
    frac, gaps = tightness_check(m, spec, r, 100, rng=0)
    assert frac == 1.0 and gaps.shape == (1, 2)
    assert np.all(np.abs(gaps) < 1e-9)
    with pytest.raises(ValueError):
        tightness_check(m, spec, r, 0)


def test_corner_points_and_cap(traffic3):
    _, spec = traffic3
    c = corner_points(spec)
    assert c.shape == (16, 4) and len(np.unique(c, axis=0)) == 16
    assert corner_points(spec, max_points=8).shape == (0, 4)


def test_overapprox_result_invariants():
    with pytest.raises(ValueError):
        OverApprox(IntervalVector([0.0], [1.0]), True, np.array([0.1]), 2)
    with pytest.raises(ValueError):
        OverApprox(IntervalVector([0.0], [1.0]), False, np.array([-0.1]), 2)
    r = OverApprox(IntervalVector([0.0], [1.0]), False, np.array([0.1]), 2)
    assert r.contains([[0.5], [1.5]]).tolist() == [True, False]
    assert set(r.to_dict()) >= {"interval", "tight", "per_dim_slack", "phi_evals"}


# ---------------------------------------------------------------------------
# properties

coef = st.floats(-2.0, 2.0, allow_nan=False)


def _random_map(n, q, data):
    M = np.array(data.draw(st.lists(coef, min_size=n * n, max_size=n * n))).reshape(n, n)
    N = np.array(data.draw(st.lists(coef, min_size=n * q, max_size=n * q))).reshape(n, q)
    wiggle = data.draw(st.floats(0.0, 0.5))

    # Jacobian of wiggle*sin(x) is diagonal, entries within [-wiggle, wiggle]
    def F(t, x, p):
        return x @ M.T + p @ N.T + wiggle * np.sin(x)

    A = IntervalMatrix(M - wiggle * np.eye(n), M + wiggle * np.eye(n))
    return F, A, IntervalMatrix.point(N)


@given(st.data(), st.sampled_from([2, 3]))
def test_discrete_result_contains_dense_grid_image(data, n):
    F, A, B = _random_map(n, 1, data)
    X0 = IntervalVector(np.zeros(n), np.ones(n))
    P = IntervalVector([-0.5], [0.5])
    r = overapprox_discrete(F, (A, B), 0.0, X0, P)
    axes = [np.linspace(0, 1, 7)] * n + [np.linspace(-0.5, 0.5, 5)]
    pts = np.array(list(itertools.product(*axes)))
    img = F(0.0, pts[:, :n], pts[:, n:])
    tol = 1e-12 * (1 + np.abs(img))
    assert np.all(img >= r.interval.lo - tol) and np.all(img <= r.interval.hi + tol)


@given(st.data())
def test_enlarging_bounds_never_shrinks_result(data):
    n = 2
    F, A, B = _random_map(n, 1, data)
    X0 = IntervalVector(np.zeros(n), np.ones(n))
    P = IntervalVector([-0.5], [0.5])
    r = overapprox_discrete(F, (A, B), 0.0, X0, P)
    # grow each entry symmetrically: centers, hence vertices, are unchanged
    g = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=n * n, max_size=n * n))).reshape(n, n)
    h = data.draw(st.floats(0.0, 1.0))
    big = overapprox_discrete(F, (IntervalMatrix(A.lo - g, A.hi + g), IntervalMatrix(B.lo - h, B.hi + h)), 0.0, X0, P)
    assert np.all(big.interval.lo <= r.interval.lo) and np.all(big.interval.hi >= r.interval.hi)


@given(st.data())
def test_bounded_reduces_to_sign_stable(data):
    n = 2
    lo = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))).reshape(2, 2)
    w = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))).reshape(2, 2)
    signs = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=4, max_size=4))).reshape(2, 2)
    a, b = signs * lo, signs * (lo + w)
    sx = IntervalMatrix(np.minimum(a, b), np.maximum(a, b))
    bounds = SensitivityBounds(sx, IntervalMatrix.zeros(n, 0), False, (0.0, 0.5))
    m = linear_model([[-0.3, 0.1], [0.2, -0.6]], np.zeros((2, 0)))
    spec = ReachSpec(0.0, 0.5, IntervalVector([0, 0], [1, 2]), NO_P)
    s, r = overapprox_sign_stable(m, spec, bounds), overapprox_bounded(m, spec, bounds)
    assert np.array_equal(s.interval.lo, r.interval.lo) and np.array_equal(s.interval.hi, r.interval.hi)
    assert r.phi_evals <= 2 * n
