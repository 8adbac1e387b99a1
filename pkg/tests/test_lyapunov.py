import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rplab.lyapunov_ldp import (assemble_curve, cell_estimates, concave_projection,
                                direction_grid, dual_norm, endpoint_ldp_check, estimate_alpha,
                                is_concave_increasing, lyapunov_curve, phase_verdict,
                                rate_function, scale_trend, shape_deviation, shape_diagnostic)
from rplab.potentials import make_spec

ZERO2 = make_spec("zero", d=2)
LAMS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def synthetic(x, profile, lams=LAMS, se=1e-3):
    """Curve whose raw values are ``|x| profile(mu)`` at every scale."""
    mag = float(np.linalg.norm(x))
    vals = np.array([mag * profile(m) for m in lams])
    A = np.repeat(vals[:, None, None], 3, axis=1)
    S = np.full_like(A, se)
    return assemble_curve(x, lams, (8.0, 16.0, 32.0), 0.0, A, S, np.zeros(A.shape, bool), 1)


def brownian(m):
    return math.sqrt(2 * m)


concave_seqs = st.lists(st.floats(0.0, 2.0), min_size=2, max_size=7).map(
    lambda inc: np.cumsum(sorted(inc, reverse=True)))


# ---------------------------------------------------------------- projection

@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.0, 5.0), min_size=2, max_size=7))
def test_projection_lands_in_the_cone_and_is_idempotent(vals):
    lams = np.arange(len(vals), dtype=float) ** 1.5
    p, dist = concave_projection(lams, vals)
    assert p[0] >= -1e-9
    sl = np.diff(p) / np.diff(lams)
    assert np.all(sl >= -1e-7) and np.all(np.diff(sl) <= 1e-7)
    assert dist == pytest.approx(np.max(np.abs(p - np.asarray(vals))))
    q, _ = concave_projection(lams, p)
    np.testing.assert_allclose(q, p, atol=1e-7)


@given(concave_seqs)
def test_concave_input_is_returned_unchanged(y):
    lams = np.arange(y.size, dtype=float)
    assert is_concave_increasing(lams, y)
    p, dist = concave_projection(lams, y)
    assert dist == 0.0 and np.array_equal(p, y)


def test_exact_profile_needs_no_projection():
    c = synthetic([1.0, 0.0], brownian)
    assert c.projection_distance == 0.0
    chk = c.checks()
    assert chk["monotone"] and chk["concave"] and chk["flattening"] and chk["projection_ok"]
    assert c.alpha_at(0.75) == pytest.approx(math.sqrt(1.5), rel=1e-12)
    with pytest.raises(ValueError):
        c.alpha_at(9.0)


def test_scale_trend_labels():
    assert scale_trend([1.0, 1.0, 1.0], [0.1] * 3) == "flat"
    assert scale_trend([1.0, 2.0, 3.0], [0.1] * 3) == "increasing"
    assert scale_trend([1.0, 2.0, 1.0], [0.1] * 3) == "zigzag"


# ---------------------------------------------------------------- homogeneity

def test_scaled_curve_is_homogeneous():
    c = synthetic([1.0, 0.0], brownian)
    s = c.scaled(2.5)
    np.testing.assert_allclose(s.alpha, 2.5 * c.alpha)
    assert s.x == (2.5, 0.0)
    with pytest.raises(ValueError):
        c.scaled(0.0)


def test_estimator_is_homogeneous_on_shared_targets():
    # a(0, 8 e1)/8 from x = e1 and a(0, 8 e1)/4 from x = 2 e1 use the same paths
    a = cell_estimates(ZERO2, [1.0, 0.0], [1.0], [8.0], 1, 500, seed=2)[0]
    b = cell_estimates(ZERO2, [2.0, 0.0], [1.0], [4.0], 1, 500, seed=2)[0]
    assert b[0, 0, 0] == pytest.approx(2 * a[0, 0, 0], rel=1e-12)


def test_input_validation():
    with pytest.raises(ValueError):
        lyapunov_curve(ZERO2, [1.0, 0.0], scales=(8.0, 16.0))
    with pytest.raises(ValueError):
        lyapunov_curve(ZERO2, [1.0, 0.0], lams=(1.0, 0.5), scales=(8.0, 16.0, 32.0))
    with pytest.raises(ValueError):
        cell_estimates(ZERO2, [0.0, 0.0], [1.0], [8.0], 1, 10)
    with pytest.raises(ValueError):
        cell_estimates(ZERO2, [0.1, 0.0], [1.0], [8.0], 1, 10)


def test_zero_potential_alpha_estimate():
    est = estimate_alpha(ZERO2, [1.0, 0.0], 2.0, (8.0, 16.0, 32.0), 1, 4000, seed=3)
    assert est.alpha == pytest.approx(2.0, rel=0.05)
    assert est.monotone_in_scale and not est.censored
    # the unit-ball offset makes small scales underestimate
    assert est.per_scale[0] < est.per_scale[-1]


# ---------------------------------------------------------------- dual norm and phases

def _zero_curves(d=2, lams=LAMS):
    return [synthetic(u, brownian, lams) for u in direction_grid(d)]


def test_dual_norm_of_the_zero_potential():
    curves = _zero_curves()
    h = np.array([0.6, 0.0])
    for mu in (0.25, 1.0, 4.0):
        assert dual_norm(curves, mu, h) == pytest.approx(0.6 / math.sqrt(2 * mu), rel=1e-12)
    assert dual_norm(curves, 0.0, h) == math.inf
    assert dual_norm(curves, 1.0, 3 * h) == pytest.approx(3 * dual_norm(curves, 1.0, h))


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 7.9), st.floats(0.1, 7.9))
def test_dual_norm_decreases_in_the_rate(h1, h2, m1, m2):
    curves = _zero_curves()
    lo, hi = sorted((m1, m2))
    assert dual_norm(curves, hi, [h1, h2]) <= dual_norm(curves, lo, [h1, h2]) + 1e-12


def test_phase_of_the_zero_potential():
    curves = _zero_curves(1)
    v = phase_verdict(curves, [1.0])
    assert v.classification == "ballistic"
    assert v.lam_h == pytest.approx(0.5, abs=1e-4)
    assert phase_verdict(curves, [0.0]).classification == "sub-ballistic"
    far = phase_verdict(curves, [10.0])
    assert far.classification == "undetermined" and far.interval[1] == math.inf


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.1, 3.0))
def test_phase_is_invariant_under_joint_rescaling(k, h):
    # alpha -> k alpha together with h -> k h leaves the dual norm unchanged
    curves = [synthetic(u, lambda m: math.sqrt(2 * m + 0.3) - math.sqrt(0.3)) for u in
              direction_grid(1)]
    a = phase_verdict(curves, [h])
    b = phase_verdict([c.rescaled_alpha(k) for c in curves], [k * h])
    assert a.classification == b.classification
    if a.lam_h is not None:
        assert b.lam_h == pytest.approx(a.lam_h, abs=2e-4)


# ---------------------------------------------------------------- rate function

def test_rate_function_of_brownian_motion():
    c = synthetic([1.0, 0.0], brownian)
    rep = rate_function(c)
    assert rep.rate == pytest.approx(0.5, rel=1e-8)
    assert rep.lam_star == pytest.approx(0.5, rel=1e-6)
    assert rep.verdicts == {"lower": True, "upper": True}
    assert not rep.censored
    assert rate_function(synthetic([0.0, 0.0], brownian)).rate == 0.0


def test_rate_function_extends_the_grid():
    c = synthetic([1.0, 0.0], brownian).scaled(5.0)
    assert rate_function(c).censored
    ext = lambda top: synthetic([5.0, 0.0], brownian, tuple(np.linspace(0, top, 9)))
    rep = rate_function(c, extend=ext)
    assert not rep.censored
    assert rep.rate == pytest.approx(12.5, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(concave_seqs.filter(lambda y: y[-1] > 0))
def test_rate_function_is_convex_along_rays(y):
    lams = tuple(float(v) for v in range(y.size))
    prof = dict(zip(lams, y))
    c = synthetic([1.0, 0.0], lambda m: prof[m], lams)
    I = [rate_function(c.scaled(t)).rate for t in (0.5, 1.0, 1.5)]
    assert I[1] <= 0.5 * (I[0] + I[2]) + 1e-8


# ---------------------------------------------------------------- shape

@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=8), st.randoms())
def test_shape_deviation_ignores_labels(vals, rnd):
    ref = [v + 0.5 for v in vals]
    perm = list(range(len(vals)))
    rnd.shuffle(perm)
    assert shape_deviation(vals, ref) == shape_deviation([vals[i] for i in perm],
                                                         [ref[i] for i in perm])


def test_zero_potential_shape_approaches_the_ball():
    dirs = direction_grid(2)[::4]
    rep = shape_diagnostic(ZERO2, 1.0, dirs, (4.0, 8.0, 16.0), 1, 2000, seed=4,
                           reference=math.sqrt(2.0))
    assert rep.a_over_r.shape == (3, 4, 1)
    assert rep.trend_down()
    with pytest.raises(ValueError):
        shape_diagnostic(ZERO2, 1.0, [[2.0, 0.0], [0.0, 1.0]], (4.0, 8.0, 16.0), 1, 10)


# ---------------------------------------------------------------- endpoint LDP

def test_endpoint_rate_ignores_constant_shift():
    kw = dict(v=[0.5, 0.0], r=0.25, t_grid=[2.0, 4.0], n_paths=2000, seed=5)
    a = endpoint_ldp_check(ZERO2, None, **kw)
    b = endpoint_ldp_check(make_spec("constant", d=2, c=0.7), None, **kw)
    for x, y in zip(a.rates, b.rates):
        assert x.rate == pytest.approx(y.rate, abs=1e-10)


def test_endpoint_rate_vanishes_at_zero_velocity():
    rep = endpoint_ldp_check(ZERO2, None, [0.0, 0.0], 1.0, [1.0, 4.0], 4000, seed=6,
                             rate_fn=lambda y: float(np.dot(y, y)) / 2)
    # P(|Z_t| < t r) = 1 - exp(-t r^2 / 2) in d = 2
    for e in rep.rates:
        exact = math.log1p(-math.exp(-e.t / 2)) / e.t
        assert abs(e.rate - exact) <= 3 * e.std_error
    assert abs(rep.rates[-1].rate) < abs(rep.rates[0].rate)
    assert rep.target == 0.0
    # the nearest sampled point of B((1, 0), 0.5) sits at 1 - 0.4995
    rep = endpoint_ldp_check(ZERO2, None, [1.0, 0.0], 0.5, [8.0, 32.0], 4000, seed=7,
                             rate_fn=lambda y: float(np.dot(y, y)) / 2)
    assert rep.target == pytest.approx(-(1 - 0.4995) ** 2 / 2, rel=1e-9)
    # finite t: |Z_t - t v|^2 / t is noncentral chi-square with 2 dof and noncentrality t
    for e in rep.rates:
        exact = math.log(stats.ncx2.cdf(0.25 * e.t, 2, e.t)) / e.t
        assert abs(e.rate - exact) <= 3 * e.std_error
    dist = rep.trend()
    assert dist[1] < dist[0]
