import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowmap.bounds import (
    BoundInputs, BoundOverflowError, bound_table, composition_factor, empirical_sup_error,
    mean_var_bounds, mismatch_bounds, rollout_sup_error, solution_bound, uniform_box_mismatch,
)
from flowmap.core import BoxDomain, Rng
from flowmap.rollout import DeltaSchedule, ExactDecayIncrement, OracleIncrement, PerturbedIncrement
from flowmap.uq import model_evaluator, rule_for_box, uq_statistics, analytic_ex1_evaluator, gauss_legendre

mpmath = pytest.importorskip("mpmath")


def _factor_mp(n, L, Delta):
    mpmath.mp.dps = 50
    x = mpmath.mpf(L) * mpmath.mpf(Delta)
    return float(mpmath.expm1(n * x) / mpmath.expm1(x))


def test_factor_examples():
    assert composition_factor(1, 1.0, 0.1) == 1.0
    assert composition_factor(10, 1.0, 0.1) == pytest.approx(16.33804, abs=1e-4)
    assert composition_factor(10, 1.0, 0.1) == pytest.approx(_factor_mp(10, 1, 0.1), rel=1e-14)
    assert composition_factor(7, 0.0, 0.1) == 7.0
    assert composition_factor(7, 1.0, 1e-300) == pytest.approx(7.0, rel=1e-12)


@given(x=st.floats(1e-10, 1.0), n=st.integers(1, 500))
@settings(max_examples=200, deadline=None)
def test_factor_matches_extended_precision(x, n):
    if n * x > 700:
        return
    assert composition_factor(n, 1.0, x) == pytest.approx(_factor_mp(n, 1.0, x), rel=1e-12)


@given(n=st.integers(1, 200), L=st.floats(0.01, 5), D=st.floats(0.001, 0.5))
@settings(max_examples=200, deadline=None)
def test_factor_strictly_increasing(n, L, D):
    if (n + 1) * L * D * 1.01 > 700:
        return
    c = composition_factor(n, L, D)
    assert composition_factor(n + 1, L, D) > c
    if n > 1:
        assert composition_factor(n, L * 1.01, D) > c
        assert composition_factor(n, L, D * 1.01) > c


def test_factor_overflow_and_validation():
    with pytest.raises(BoundOverflowError, match="bound overflows"):
        composition_factor(10_000, 1.0, 0.1)
    with pytest.raises(ValueError):
        composition_factor(0, 1.0, 0.1)


def test_mean_var_bound_examples():
    assert mean_var_bounds(BoundInputs(5, 1.0, 0.1, 0.0, 1.0)) == (0.0, 0.0)
    m, v = mean_var_bounds(BoundInputs(1, 1.0, 0.1, 0.01, 1.0))
    assert m == pytest.approx(0.01, rel=1e-15) and v == pytest.approx(0.0402, rel=1e-14)
    _, v1 = mean_var_bounds(BoundInputs(30, 1.0, 0.1, 0.01, 0.0))
    _, v2 = mean_var_bounds(BoundInputs(30, 1.0, 0.1, 0.02, 0.0))
    assert v2 == pytest.approx(4 * v1, rel=1e-14)


def test_mismatch_bound_examples():
    assert mismatch_bounds(BoundInputs(3, 1.0, 0.1, 0.0, C_t_tilde=1.0)) == (0.0, 0.0)
    m, v = mismatch_bounds(BoundInputs(3, 1.0, 0.1, 0.0, C_t_tilde=1.0, gamma=0.1))
    assert m == pytest.approx(0.1, rel=1e-15) and v == pytest.approx(0.3, rel=1e-14)
    inp = BoundInputs(40, 1.0, 0.1, 0.003, C_t=2.0, C_t_tilde=2.0)
    assert mismatch_bounds(inp)[0] == pytest.approx(mean_var_bounds(inp)[0], rel=1e-15)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        BoundInputs(0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        BoundInputs(1, 1.0, 0.1, -0.1)


def test_uniform_box_mismatch():
    assert uniform_box_mismatch(BoxDomain([0.0], [1.0]), BoxDomain([0.0], [1.0])) == (0.0, 0.0)
    g, e = uniform_box_mismatch(BoxDomain([0.0], [1.0]), BoxDomain([0.5], [2.5]))
    # overlap [0.5,1]: |1 - 1/2| * 0.5; escaped mass 1.5/2 + 0.5/1
    assert g == pytest.approx(0.25) and e == pytest.approx(1.25)


def test_sup_error_of_exact_and_offset_stubs():
    stub = OracleIncrement("linear-scalar")
    assert empirical_sup_error(stub, "linear-scalar", 2000, Rng(0)).value <= 1e-10
    off = empirical_sup_error(PerturbedIncrement(stub, [0.01]), "linear-scalar", 2000, Rng(0))
    assert abs(off.value - 0.01) <= 1e-10
    assert off.z.shape == (1,) and 0 <= off.delta <= 0.1
    with pytest.raises(ValueError):
        empirical_sup_error(stub, "linear-scalar", 10)


def test_solution_bound():
    assert solution_bound("linear-scalar", [1.0], [[0.5], [1.0]], np.linspace(0, 3, 4)) == 1.0


@pytest.mark.parametrize("E", [1e-3, 1e-2])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_lemma_on_linear_scalar(E, sign):
    g = np.random.default_rng(0)
    x0 = g.uniform(0, 1, (40, 1))
    alpha = g.uniform(0, 1, (40, 1))
    sched = DeltaSchedule.uniform(0.1, 300)
    err = rollout_sup_error(PerturbedIncrement(ExactDecayIncrement(), [sign * E]), "linear-scalar", x0, alpha, sched)
    for n in (1, 10, 100, 300):
        assert err[n] <= composition_factor(n, 1.0, 0.1) * E + 1e-12


@pytest.mark.parametrize("E", [1e-3, 1e-2])
def test_theorem_on_linear_scalar(E):
    sched = DeltaSchedule.uniform(0.1, 300)
    rule = gauss_legendre(10, (0, 1), probability=True)
    est = uq_statistics(model_evaluator(PerturbedIncrement(ExactDecayIncrement(), [E]), [1.0], sched), rule, batched=True)
    ref = uq_statistics(analytic_ex1_evaluator(sched.times), rule, batched=True)
    for n in (10, 100, 300):
        mb, vb = mean_var_bounds(BoundInputs(n, 1.0, 0.1, E, C_t=1.0))
        assert abs(est.mean[n, 0] - ref.mean[n, 0]) <= mb
        assert abs(est.var[n, 0] - ref.var[n, 0]) <= vb


def test_mismatch_theorem_on_linear_scalar():
    E = 1e-3
    true_box, est_box = BoxDomain([0.0], [1.0]), BoxDomain([0.1], [1.2])
    gamma, eta = uniform_box_mismatch(true_box, est_box)
    sched = DeltaSchedule.uniform(0.1, 100)
    ref = uq_statistics(analytic_ex1_evaluator(sched.times), rule_for_box(true_box, 10), batched=True)
    est = uq_statistics(model_evaluator(PerturbedIncrement(ExactDecayIncrement(), [E]), [1.0], sched),
                        rule_for_box(est_box, 10), batched=True)
    # the perturbed rollout from x0=1 stays below 1 + n E, bounding the union of ranges
    Ct = 1.0 + 100 * E
    for n in (10, 50, 100):
        mb, vb = mismatch_bounds(BoundInputs(n, 1.2, 0.1, E, C_t_tilde=Ct, gamma=gamma, eta=eta))
        assert abs(est.mean[n, 0] - ref.mean[n, 0]) <= mb
        assert abs(est.var[n, 0] - ref.var[n, 0]) <= vb


def test_bound_table():
    rows = bound_table([1, 10], 1.0, 0.1, 0.01, C_t=1.0)
    assert rows[0]["C"] == 1.0 and rows[1]["traj_bound"] == pytest.approx(0.1633804, abs=1e-6)
    assert "mean_bound" in rows[0] and "mismatch_mean_bound" not in rows[0]
