import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from suspensionlab.ctrw import (
    CTRWModel,
    TruncationWarning,
    build_suspension_realization,
    bessel_series,
    convolution_power,
    ctrw_llt_check,
    exact_dist,
    exact_table,
    sample_ctrw,
    simple_walk,
)

WALK = simple_walk()


def test_zero_time_is_a_point_mass():
    assert sample_ctrw(WALK, 0.0, np.random.default_rng(0)) == 0
    assert exact_dist(WALK, 0.0, 0) == 1.0
    assert exact_dist(WALK, 0.0, 1) == 0.0


def test_sample_mean_and_variance():
    x = sample_ctrw(WALK, 100.0, np.random.default_rng(1), size=100_000)
    assert abs(x.mean()) < 4 * 10 / math.sqrt(100_000)
    assert x.var() / 100.0 == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("t", [0.5, 3.0, 10.0])
def test_origin_probability_is_bessel(t):
    p = exact_dist(WALK, t, 0)
    assert p == pytest.approx(bessel_series(t), abs=1e-12)
    assert p == pytest.approx(math.exp(-t) * special.i0(t), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.1, 60.0))
def test_exact_law_symmetric_and_normalized(t):
    tab = exact_table(WALK, t)
    ks = tab.offset + np.arange(len(tab.probs))
    assert tab.probs.sum() == pytest.approx(1.0, abs=max(1e-12, 2 * tab.tail_bound))
    for k in (1, 2, 5):
        assert tab(k) == pytest.approx(tab(-k), abs=1e-14)
    assert np.all(tab.probs >= 0) and ks[0] == -ks[-1]


def test_convolution_powers_compose():
    model = CTRWModel(1.0, {-2: 0.2, 1: 0.5, 3: 0.3})
    a, lo_a = convolution_power(model, 3)
    b, lo_b = convolution_power(model, 4)
    c, lo_c = convolution_power(model, 7)
    assert lo_a + lo_b == lo_c
    assert np.allclose(np.convolve(a, b), c, atol=1e-15)


def test_intensity_scaling():
    # S^(t) for intensity lam equals S^(lam t) for intensity 1
    fast = CTRWModel(2.5, {-1: 0.5, 1: 0.5})
    for k in (0, 3, -7):
        assert exact_dist(fast, 4.0, k) == exact_dist(WALK, 10.0, k)


def test_llt_error_decreases():
    errs = [abs(ctrw_llt_check(WALK, t).rel_error) for t in (25, 100, 400)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_llt_off_centre():
    chk = ctrw_llt_check(WALK, 400, z=1.0)
    assert chk.target == pytest.approx(0.24197072451914337, abs=1e-9)
    assert abs(chk.rel_error) < 0.05
    assert chk.drift == 20


def test_llt_window():
    chk = ctrw_llt_check(WALK, 400, U=(-1, 0, 1))
    assert chk.target == pytest.approx(3 * 0.3989422804014327, abs=1e-9)
    assert abs(chk.rel_error) < 0.01


def test_non_simple_walk_llt():
    model = CTRWModel(1.0, {-2: 0.25, -1: 0.25, 1: 0.25, 2: 0.25})
    assert model.second_moment == pytest.approx(2.5)
    assert abs(ctrw_llt_check(model, 400).rel_error) < 0.01


def test_model_validation():
    with pytest.raises(ValueError):
        CTRWModel(0.0, {1: 1.0})
    with pytest.raises(ValueError):
        CTRWModel(1.0, {1: 0.4, -1: 0.4})


def test_truncation_warning():
    with pytest.warns(TruncationWarning):
        exact_dist(WALK, 1.0, 25, truncation_sigmas=24.0)


def test_suspension_realization_matches_exact():
    rep = build_suspension_realization(WALK, t=20.0, samples=400_000, seed=3)
    assert rep.tv_distance < 0.01


def test_suspension_one_jump_probabilities():
    rep = build_suspension_realization(WALK, t=1.0, samples=400_000, seed=4)
    for k in (-1, 1):
        exact = rep.one_jump_exact[k]
        assert exact == pytest.approx(0.5 * math.exp(-1.0))
        se = math.sqrt(exact * (1 - exact) / rep.samples)
        assert abs(rep.one_jump_empirical[k] - exact) < 4 * se
