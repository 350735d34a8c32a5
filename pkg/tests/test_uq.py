import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowmap.core import BoxDomain, Rng, Trajectory
from flowmap.rollout import DeltaSchedule, ExactDecayIncrement
from flowmap.systems import analytic_mean_var_ex1
from flowmap.uq import (
    Density, QuadratureRule, analytic_ex1_evaluator, gauss_legendre, mc_statistics, model_evaluator,
    reference_statistics, rule_for_box, tensor_rule, uq_statistics,
)


def test_midpoint_rule():
    r = gauss_legendre(1, (0.0, 1.0))
    assert r.nodes[0, 0] == 0.5 and r.weights[0] == 1.0


def test_five_point_table():
    r = gauss_legendre(5)
    np.testing.assert_allclose(r.nodes[:, 0], [-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640], atol=1e-15)
    np.testing.assert_allclose(r.weights, [0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                           0.4786286704993665, 0.2369268850561891], atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 7, 10, 20, 33, 64])
def test_matches_numpy_leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_legendre(n)
    np.testing.assert_allclose(r.nodes[:, 0], x, atol=1e-14)
    np.testing.assert_allclose(r.weights, w, atol=1e-14)


def test_exponential_integral():
    r = gauss_legendre(10, (0.0, 1.0))
    assert abs(r.integrate(lambda y: np.exp(-y[:, 0])) - (1 - math.exp(-1))) <= 1e-12


@given(n=st.integers(1, 30), a=st.floats(-3, 3), w=st.floats(0.1, 4))
@settings(max_examples=80, deadline=None)
def test_monomial_exactness(n, a, w):
    b = a + w
    r = gauss_legendre(n, (a, b))
    for k in range(2 * n):
        exact = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
        got = r.integrate(lambda y: y[:, 0] ** k)
        scale = max(abs(exact), (max(abs(a), abs(b)) ** (k + 1) - 0) / (k + 1) * 1e-3, 1e-300)
        assert abs(got - exact) <= 1e-12 * scale


def test_monomial_exactness_unit_interval_ten_points():
    r = gauss_legendre(10, (0.0, 1.0), probability=True)
    for k in range(20):
        assert abs(r.integrate(lambda y: y[:, 0] ** k) - 1 / (k + 1)) <= 1e-12


@given(n=st.integers(1, 64), a=st.floats(-100, 100), w=st.floats(1e-3, 100))
@settings(max_examples=60, deadline=None)
def test_probability_weights_sum_to_one(n, a, w):
    assert abs(gauss_legendre(n, (a, a + w), probability=True).weights.sum() - 1.0) <= 1e-14


def test_point_count_guards():
    with pytest.raises(ValueError):
        gauss_legendre(65)
    with pytest.raises(ValueError):
        gauss_legendre(0)
    with pytest.raises(ValueError):
        tensor_rule([gauss_legendre(64)] * 4)


def test_tensor_rule_count_order_and_weights():
    r1 = gauss_legendre(5, (0, 1), probability=True)
    r = tensor_rule([r1, r1])
    assert len(r) == 25
    assert abs(r.weights.sum() - 1.0) <= 1e-14
    # first factor varies slowest
    np.testing.assert_array_equal(r.nodes[:5, 0], np.full(5, r1.nodes[0, 0]))
    np.testing.assert_array_equal(r.nodes[:5, 1], r1.nodes[:, 0])


def test_tensor_polynomial():
    r1 = gauss_legendre(5, (0, 1))
    r = tensor_rule([r1, r1])
    assert abs(r.integrate(lambda y: y[:, 0] ** 3 * y[:, 1] ** 2) - 1 / 12) <= 1e-12


def test_rule_for_box_pins_degenerate_dimensions():
    box = BoxDomain([0.0, 2.0, 8.8], [0.4, 2.0, 9.2])
    r = rule_for_box(box, 5)
    assert len(r) == 25 and np.all(r.nodes[:, 1] == 2.0)
    assert abs(r.weights.sum() - 1.0) <= 1e-14


def _const_evaluator(alpha):
    return Trajectory([0.0, 1.0], np.array([[1.0, 2.0], [3.0, 4.0]]), alpha)


def test_constant_evaluator():
    st_ = uq_statistics(_const_evaluator, gauss_legendre(4, (0, 1), probability=True))
    np.testing.assert_allclose(st_.mean, [[1.0, 2.0], [3.0, 4.0]], rtol=1e-14)
    assert np.all(st_.var == 0)


def test_two_node_hand_arithmetic():
    rule = QuadratureRule(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    ev = lambda a: Trajectory([0.0], np.array([[2.0 * a[0]]]), a)
    st_ = uq_statistics(ev, rule)
    assert st_.mean[0, 0] == 1.0 and st_.var[0, 0] == 1.0


def test_inconsistent_grid():
    rule = QuadratureRule(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    ev = lambda a: Trajectory(np.arange(1 + int(a[0])), np.zeros((1 + int(a[0]), 1)), a)
    with pytest.raises(ValueError):
        uq_statistics(ev, rule)


def _gl10_exact(t):
    """10-point rule applied to exp(-alpha t) on [0, 1], nodes and sums in 40 digits."""
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    x, w = np.polynomial.legendre.leggauss(10)
    T = mpmath.mpf(t)
    m1 = sum(mpmath.mpf(wi) / 2 * mpmath.e ** (-T * (mpmath.mpf(xi) + 1) / 2) for xi, wi in zip(x, w))
    m2 = sum(mpmath.mpf(wi) / 2 * mpmath.e ** (-2 * T * (mpmath.mpf(xi) + 1) / 2) for xi, wi in zip(x, w))
    return float(m1), float(m2 - m1 * m1)


def test_analytic_ex1_statistics_match_exact_quadrature():
    times = np.arange(31.0)
    rule = gauss_legendre(10, (0, 1), probability=True)
    st_ = uq_statistics(analytic_ex1_evaluator(times), rule, batched=True)
    for k, t in enumerate(times):
        m, v = _gl10_exact(t)
        assert abs(st_.mean[k, 0] - m) <= 1e-14
        assert abs(st_.var[k, 0] - v) <= 1e-14


def test_analytic_ex1_statistics_match_closed_form_while_rule_resolves():
    # the rule resolves the mean to 1e-10 up to t=10 and the variance up to t=6
    times = np.arange(11.0)
    st_ = uq_statistics(analytic_ex1_evaluator(times), gauss_legendre(10, (0, 1), probability=True), batched=True)
    mean, var = analytic_mean_var_ex1(times)
    assert np.max(np.abs(st_.mean[:, 0] - mean)) <= 1e-10
    assert np.max(np.abs(st_.var[:7, 0] - var[:7])) <= 1e-10


def test_ten_point_rule_cannot_resolve_late_times():
    # inherent quadrature error, independent of how nodes are computed
    mean30, _ = analytic_mean_var_ex1(30.0)
    m, v = _gl10_exact(30.0)
    assert abs(m - mean30) == pytest.approx(6.92e-7, rel=1e-2)


def test_mc_clt_band_and_determinism():
    times = np.array([0.0, 1.0])
    dens = Density(BoxDomain([0.0], [1.0]))
    a = mc_statistics(analytic_ex1_evaluator(times), dens, 100_000, Rng(3), batched=True)
    b = mc_statistics(analytic_ex1_evaluator(times), dens, 100_000, Rng(3), batched=True)
    assert a.mean.tobytes() == b.mean.tobytes() and a.var.tobytes() == b.var.tobytes()
    mean, var = analytic_mean_var_ex1(1.0)
    assert abs(a.mean[1, 0] - mean) <= 3 * math.sqrt(var / 100_000)
    assert abs(mean - 0.63212) < 1e-5


def test_mc_constant_evaluator_zero_variance():
    st_ = mc_statistics(_const_evaluator, Density(BoxDomain([0.0], [1.0])), 10, Rng(0))
    assert np.all(st_.var == 0)


def test_mc_agrees_with_quadrature():
    times = np.array([0.0, 0.5, 1.0, 5.0, 30.0])
    ev = analytic_ex1_evaluator(times)
    n = 1_000_000
    mc = mc_statistics(ev, Density(BoxDomain([0.0], [1.0])), n, Rng(11), batched=True, chunk=250_000)
    gl = uq_statistics(ev, gauss_legendre(10, (0, 1), probability=True), batched=True)
    se = np.sqrt(gl.var[1:, 0] / n)
    assert np.all(np.abs(mc.mean[1:, 0] - gl.mean[1:, 0]) <= 3 * se)


def test_reference_statistics_linear_scalar():
    times = np.arange(0.0, 30.5, 0.5)
    ref = reference_statistics("linear-scalar", [1.0], gauss_legendre(10, (0, 1), probability=True), times)
    exact = np.array([_gl10_exact(t) for t in times])
    assert np.max(np.abs(ref.mean[:, 0] - exact[:, 0])) <= 1e-9
    assert np.max(np.abs(ref.var[:, 0] - exact[:, 1])) <= 1e-9
    mean, _ = analytic_mean_var_ex1(times)
    early = times <= 10
    assert np.max(np.abs(ref.mean[early, 0] - mean[early])) <= 1e-9


def test_reference_statistics_trivial_grids():
    rule = rule_for_box(BoxDomain([0.0, 8.8], [0.4, 9.2]), 3)
    st0 = reference_statistics("oscillator", [0.3, -0.2], rule, [0.0])
    np.testing.assert_array_equal(st0.mean[0], [0.3, -0.2])
    assert np.all(st0.var == 0)
    eq = reference_statistics("oscillator", [0.0, 0.0], rule, np.linspace(0, 5, 6))
    assert np.all(eq.mean == 0) and np.all(eq.var == 0)


def test_model_evaluator_with_stub():
    sched = DeltaSchedule.uniform(0.1, 300)
    st_ = uq_statistics(model_evaluator(ExactDecayIncrement(), [1.0], sched),
                        gauss_legendre(10, (0, 1), probability=True), batched=True)
    exact = np.array([_gl10_exact(t)[0] for t in sched.times[::10]])
    assert np.max(np.abs(st_.mean[::10, 0] - exact)) <= 1e-10


@given(seed=st.integers(0, 1000), shift=st.floats(-1e6, 1e6))
@settings(max_examples=40, deadline=None)
def test_variance_nonnegative(seed, shift):
    g = np.random.default_rng(seed)
    vals = shift + g.normal(0, 1e-9, (6, 3, 2))
    vals[:, :, 1] = shift
    rule = QuadratureRule(g.uniform(size=(6, 1)), np.full(6, 1 / 6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        st_ = uq_statistics(lambda a: (np.arange(3.0), vals), rule, batched=True)
    assert np.all(st_.var >= 0)


def test_negative_variance_warns():
    from flowmap.uq import _clamp_var

    with pytest.warns(RuntimeWarning):
        out = _clamp_var(np.array([-1e-10, 1.0]))
    assert out[0] == 0.0
