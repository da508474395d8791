import math

import numpy as np
import pytest

from suspensionlab.experiments import (
    FiberSet,
    LLTExperiment,
    RectSet,
    deviation_bound_check,
    estimate_con_llt,
    estimate_int_llt,
    extended_llt_ratio,
    fit_split_eps,
    krickeberg_order1,
    mc_seeds,
    renewal_variance,
    order2_rwm,
    rwm_cesaro,
    split_I_II,
    weak_independence,
)
from suspensionlab.systems import get_system
from suspensionlab.transfer import discretize

TWO_LEVEL = get_system("roof-two-level")
DIGIT = get_system("doubling-digit")


# --- Int-LLT


@pytest.mark.parametrize("A, B", [
    (RectSet(), RectSet()),
    (RectSet(((1,),), (0.0, 1.0)), RectSet(((0,), (3,)), (0.2, 0.9))),
])
def test_int_llt_exact_agrees_with_monte_carlo(A, B):
    exp = LLTExperiment(TWO_LEVEL, A=A, B=B, times=(48.0,), samples=400_000)
    exact = estimate_int_llt(exp)[0]
    mc = estimate_int_llt(exp, "mc", seed=6)[0]
    assert abs(exact.estimate - mc.estimate) < 3 * mc.stderr
    assert not mc.budget_insufficient


def test_int_llt_near_target():
    p = estimate_int_llt(LLTExperiment(DIGIT, times=(200.0,)))[0]
    assert abs(p.rel_error) < 0.1


def test_int_llt_empty_window_and_sets():
    assert estimate_int_llt(LLTExperiment(TWO_LEVEL, U=(), times=(48.0,)))[0].estimate == 0.0
    p = estimate_int_llt(LLTExperiment(TWO_LEVEL, A=RectSet(()), times=(48.0,)))[0]
    assert p.estimate == 0.0 and p.target == 0.0


def test_int_llt_window_additivity():
    est = lambda U: estimate_int_llt(LLTExperiment(TWO_LEVEL, U=U, times=(48.0,)))[0].estimate
    assert est((0, 1)) == pytest.approx(est((0,)) + est((1,)), abs=1e-14)


def test_mc_needs_seed():
    with pytest.raises(ValueError):
        estimate_int_llt(LLTExperiment(TWO_LEVEL, times=(8.0,), samples=100), "mc")


def test_mc_seed_streams():
    assert mc_seeds(1234, 4) == [1234, 1235, 1232, 1233]


def test_mc_reproducible_and_worker_split():
    exp = LLTExperiment(TWO_LEVEL, times=(16.0,), samples=20_000)
    a = estimate_int_llt(exp, "mc", seed=9)[0]
    b = estimate_int_llt(exp, "mc", seed=9)[0]
    assert a.estimate == b.estimate
    c = estimate_int_llt(exp, "mc", seed=9, workers=2)[0]
    assert abs(c.estimate - a.estimate) < 4 * a.stderr


def test_height_interval_validated():
    with pytest.raises(ValueError):
        LLTExperiment(TWO_LEVEL, A=RectSet(((0,),), (0.0, 1.5)))
    LLTExperiment(TWO_LEVEL, A=RectSet(((1,),), (0.0, 1.5)))


def test_nu_normalized():
    exp = LLTExperiment(TWO_LEVEL)
    assert exp.nu_n(RectSet()) == pytest.approx(1 / 1.25)
    assert exp.nu_n(RectSet(((1,),), (0.0, 2.0))) == pytest.approx(0.25 * 2 / 1.25)


def test_renewal_variance_closed_form():
    # phi - (1/3) r = (2 d - 1) / 3 on iid digits d
    assert renewal_variance(discretize(get_system("doubling-roof-line"))) == pytest.approx(1 / 9, abs=1e-12)
    assert renewal_variance(discretize(TWO_LEVEL)) == pytest.approx(0.5, abs=1e-12)


# --- Con-LLT


@pytest.mark.parametrize("system", [DIGIT, TWO_LEVEL])
def test_con_llt_half_integer_time(system):
    p = estimate_con_llt(LLTExperiment(system, times=(64.5,)))[0]
    assert p.max_rel_error < 0.05
    assert p.mass_loss == 0.0


def test_con_llt_coupled_roof_and_jump():
    # r = 1 + phi couples J(t) to N(t); the scale must use the renewal variance
    p = estimate_con_llt(LLTExperiment(get_system("doubling-roof-line"), times=(256.0,)))[0]
    assert p.max_rel_error < 0.01


def test_con_llt_custom_points():
    p = estimate_con_llt(LLTExperiment(TWO_LEVEL, times=(64.0,)), eval_points=[(0, 0.1), (1, 1.7)])[0]
    assert len(p.values) == 2 and p.max_rel_error < 0.05
    with pytest.raises(ValueError):
        estimate_con_llt(LLTExperiment(TWO_LEVEL, times=(64.0,)), eval_points=[(0, 1.2)])


def test_con_llt_rejects_irrational_roof():
    from suspensionlab.cocycle import CocycleSystem, GroupSpec
    from suspensionlab.dynamics import doubling_map
    sys = CocycleSystem.build(doubling_map(), {(0,): 1.0, (1,): math.sqrt(2)}, {(0,): 0, (1,): 1},
                              GroupSpec(1, True))
    with pytest.raises(ValueError):
        estimate_con_llt(LLTExperiment(sys, times=(8.0,)))


# --- splitting


def test_split_limits():
    exp = LLTExperiment(TWO_LEVEL)
    wide = split_I_II(exp, 1e9, 50.0)
    assert wide.II_value == 0.0
    narrow = split_I_II(exp, 0.0, 50.0)
    assert narrow.I_value + narrow.II_value == pytest.approx(wide.I_value, abs=1e-12)
    mid = split_I_II(exp, 1.0, 50.0)
    assert mid.II_value < narrow.II_value


def test_split_fit_envelope_decreasing():
    fit = fit_split_eps(LLTExperiment(TWO_LEVEL), 50.0)
    eps = [fit.eps(M) for M in (0, 1, 2, 4)]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert fit.K == pytest.approx(1.6)


# --- deviation and extended bounds


def test_deviation_empty_set_is_trivial():
    rep = deviation_bound_check(LLTExperiment(TWO_LEVEL, A=RectSet(())), [20, 40], [30])
    assert rep.passed and rep.constants["Gamma"] == 0.0


def test_deviation_bound_holds_on_training_grid():
    rep = deviation_bound_check(LLTExperiment(TWO_LEVEL), [20, 40, 60], [30, 50])
    assert rep.train_max_ratio <= 1 + 1e-9
    assert rep.constants["gamma"] > 0


def test_extended_ratio_gamma_floor():
    rep = extended_llt_ratio(TWO_LEVEL, [8, 16], [12])
    assert rep.constants["Gamma"] >= 1.0
    assert rep.train_max_ratio <= 1 + 1e-9


# --- rational weak mixing


def test_rwm_deck_translated_set():
    rep = rwm_cesaro(get_system("roof-const"), FiberSet(h=1), N_grid=(16, 64, 256))
    assert rep.decreasing
    assert rep.constants["mu_C"] == pytest.approx(1.0)


def test_rwm_null_set_control():
    rep = rwm_cesaro(get_system("roof-const"), FiberSet(RectSet(())), N_grid=(16, 64))
    assert rep.D == [0.0, 0.0]


# --- order 2


def test_order2_empty_set():
    rep = order2_rwm(get_system("zcover-sft"), A=[], N_grid=(16, 64), krickeberg_t=32)
    assert rep.cesaro == [0.0, 0.0]
    assert rep.krickeberg_value == 0.0


def test_krickeberg_cylinder_sets():
    res = krickeberg_order1(get_system("zcover-sft"), A=[(1,)], B=[(4,)], t=64)
    assert abs(res["rel_error"]) < 0.1


def test_order2_rejects_fractional_levels():
    with pytest.raises(ValueError):
        order2_rwm(get_system("zcover-sft"), tau=0.5, N_grid=(4,))


# --- weak independence


def test_weak_independence():
    assert weak_independence(DIGIT)["c"] == pytest.approx(1.0)
    rep = weak_independence(get_system("zcover-sft"), cap=1.2)
    assert 1.0 < rep["c"] < np.inf and rep["flagged"]
