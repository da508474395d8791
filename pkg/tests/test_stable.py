import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from suspensionlab.stable import (
    CalibrationError,
    FourierGrid,
    GridWarning,
    JointLawZ,
    ScalingSequence,
    StableLaw,
    b_of,
    c_exponent,
    calibrate_b,
    density,
    gaussian_density,
    joint_density,
    median_abs,
    write_density_csv,
)
from suspensionlab.systems import get_system
from suspensionlab.transfer import discretize

GAUSS = StableLaw.gaussian(0.5)
CAUCHY = StableLaw.cauchy()
AXES4 = StableLaw(2.0, ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)), (0.25,) * 4)


def test_c_exponent_examples():
    assert c_exponent(CAUCHY, [0.0]) == 0.0
    assert c_exponent(CAUCHY, [2.0]) == pytest.approx(2.0)
    assert c_exponent(AXES4, [1.0, 0.0]) == pytest.approx(0.5)
    assert c_exponent(AXES4, [0.0, 0.0]) == 0.0


def test_asymmetric_spectral_measure_rejected():
    with pytest.raises(ValueError):
        StableLaw(1.0, ((1.0,), (-1.0,)), (1.0, 0.5))
    with pytest.raises(ValueError):
        StableLaw(2.5, ((1.0,), (-1.0,)), (0.5, 0.5))


def test_density_examples():
    assert density(GAUSS, 0.0) == pytest.approx(0.398942280401, abs=1e-9)
    assert density(CAUCHY, 0.0) == pytest.approx(1 / math.pi, abs=1e-8)
    assert density(CAUCHY, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-8)


def test_two_dimensional_gaussian():
    law = StableLaw.gaussian(0.5, kappa=2)
    assert density(law, [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi), rel=1e-6)
    assert density(law, [1.0, -0.5]) == pytest.approx(
        gaussian_density(0.5, 1.0) * gaussian_density(0.5, -0.5), rel=1e-6)


def test_singular_law_has_no_density():
    law = StableLaw.symmetric(2.0, [[1.0, 0.0]], [1.0])
    assert not law.globally_supported
    with pytest.raises(ValueError):
        density(law, [0.0, 0.0])


@pytest.mark.parametrize("z", [0.0, 0.5, 1.3, 2.7])
def test_p2_matches_closed_form(z):
    a = 0.7
    assert density(StableLaw.gaussian(a), z) == pytest.approx(gaussian_density(a, z), abs=1e-8)


def test_gaussian_integrates_to_one():
    val, _ = integrate.quad(lambda z: density(GAUSS, z), -12, 12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_cauchy_window_mass():
    L = 5.0
    val, _ = integrate.quad(lambda z: density(CAUCHY, z), -L, L, limit=200)
    assert val == pytest.approx(2 / math.pi * math.atan(L), abs=1e-6)


@pytest.mark.parametrize("lam", [0.5, 2.0])
@pytest.mark.parametrize("z", [0.0, 1.0])
def test_scaling_self_similarity(lam, z):
    assert density(CAUCHY.scaled(lam), z) == pytest.approx(density(CAUCHY, z / lam) / lam, rel=1e-7)


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.8, 2.0), z=st.floats(0.0, 4.0))
def test_density_even_and_positive(p, z):
    law = StableLaw.symmetric(p, [[1.0]], [1.0])
    f = density(law, z)
    assert f > 0
    assert density(law, -z) == pytest.approx(f, abs=1e-12)


def test_under_resolved_grid_warns():
    with pytest.warns(GridWarning):
        density(CAUCHY, 0.0, FourierGrid(5.0, 5.0 / 512, 512))


def test_joint_density():
    jz = JointLawZ(0.5, CAUCHY)
    assert joint_density(jz, 0.0, 0.0) == pytest.approx(0.398942 * 0.318310, abs=1e-6)
    assert joint_density(jz, 0.3, -0.7) == pytest.approx(joint_density(jz, -0.3, 0.7), abs=1e-12)
    assert joint_density(jz, 0.3, 0.4) == pytest.approx(
        gaussian_density(0.5, 0.3) * density(CAUCHY, 0.4), abs=1e-12)


def test_scaling_sequence():
    assert b_of(ScalingSequence(2.0, 1.0), 100) == pytest.approx(10.0)
    assert b_of(ScalingSequence(1.0, 0.5), 8) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        b_of(ScalingSequence(2.0, 1.0), 0)


def test_median_abs():
    assert median_abs(CAUCHY) == pytest.approx(1.0, abs=1e-6)
    assert median_abs(GAUSS) == pytest.approx(0.6744897501960817)
    # no closed form at p = 1.5; the p = 1 and p = 2 unit-weight medians bracket it
    assert math.sqrt(2) * 0.6744897 < median_abs(StableLaw.symmetric(1.5, [[1.0]], [1.0])) < 1.0


def _chain_birkhoff(base, n, size, rng):
    """Birkhoff sums of phi along the aligned bin chain (exact for full-branch maps)."""
    M = base.ulam.matrix
    cum = np.cumsum(M, axis=1)
    state = rng.choice(base.nbins, size=size, p=base.mu)
    total = np.zeros(size)
    for _ in range(n):
        total += base.phi[state, 0]
        state = np.minimum((rng.random(size)[:, None] > cum[state]).sum(axis=1), base.nbins - 1)
    return total


def test_calibrate_centered_digit():
    base = discretize(get_system("doubling-pm-half"))
    rng = np.random.default_rng(7)
    samples = _chain_birkhoff(base, 256, 20000, rng)
    # 256 steps of +-1/2 land on the integers, so dequantize with spacing 1
    assert np.all(samples == np.round(samples))
    seq = calibrate_b(samples, 256, GAUSS, lattice_spacing=1.0, rng=rng)
    assert seq.sigma_b == pytest.approx(0.5, rel=0.05)


def test_calibrate_lattice_dequantized():
    rng = np.random.default_rng(2)
    samples = rng.binomial(400, 0.5, 40000) - 200
    seq = calibrate_b(samples, 400, GAUSS, lattice_spacing=1.0, rng=rng)
    assert seq.sigma_b == pytest.approx(0.5, rel=0.05)


def test_calibrate_degenerate():
    with pytest.raises(CalibrationError):
        calibrate_b(np.zeros(100), 10, GAUSS)


def test_density_csv(tmp_path):
    path = write_density_csv(tmp_path / "f.csv", GAUSS, [0.0, 1.0])
    rows = path.read_text().splitlines()
    assert rows[0].startswith("z,f,grid_extent")
    assert float(rows[1].split(",")[1]) == pytest.approx(0.398942, abs=1e-6)
