"""The ten acceptance criteria at their stated tolerances.

Each test carries ``acceptance(number, name)``; the conftest prints one
PASS/FAIL line per criterion after the run.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from suspensionlab.ctrw import bessel_series, ctrw_llt_check, exact_dist, simple_walk
from suspensionlab.experiments import (
    LLTExperiment,
    deviation_bound_check,
    estimate_con_llt,
    extended_llt_ratio,
    fit_split_eps,
    order2_rwm,
    rwm_cesaro,
    split_I_II,
)
from suspensionlab.systems import get_system
from suspensionlab.transfer import discretize, eigen_curve, lattice_llt_oracle, nagaev_fit

GAUSS0 = 1 / math.sqrt(2 * math.pi)
TESTS = Path(__file__).parent


def note(record_property, text):
    record_property("detail", text)


@pytest.mark.acceptance(1, "CTRW LLT from the exact Poisson-convolution law")
def test_criterion_1_ctrw_llt(record_property):
    start = time.perf_counter()
    walk = simple_walk(1.0)
    e100 = ctrw_llt_check(walk, 100).rel_error
    e400 = ctrw_llt_check(walk, 400).rel_error
    elapsed = time.perf_counter() - start
    assert ctrw_llt_check(walk, 100).target == pytest.approx(GAUSS0, abs=1e-9)
    note(record_property, f"rel err t=100 {e100:.2e}, t=400 {e400:.2e}, {elapsed:.2f} s")
    assert abs(e100) < 0.08
    assert abs(e400) < 0.02
    assert elapsed < 10


@pytest.mark.acceptance(2, "exact law at the origin equals the Bessel series")
def test_criterion_2_bessel(record_property):
    p = exact_dist(simple_walk(1.0), 1.0, 0)
    ref = sum(math.exp(-1) * 0.5 ** (2 * m) / math.factorial(m) ** 2 for m in range(40))
    note(record_property, f"p = {p:.12f}, |diff| = {abs(p - ref):.1e}")
    assert abs(p - ref) < 1e-10
    assert abs(p - bessel_series(1.0)) < 1e-10
    assert p == pytest.approx(0.465760, abs=5e-7)


@pytest.mark.acceptance(3, "Nagaev eigenvalue and curvature, doubling map with +-1/2")
def test_criterion_3_nagaev(record_property):
    base = discretize(get_system("doubling-pm-half"), 64)
    assert base.nbins >= 64
    ts = np.linspace(0.0, 1.0, 21)
    rows = eigen_curve(base, ts)
    err = max(abs(complex(r[1], r[2]) - math.cos(r[0] / 2)) for r in rows)
    a = nagaev_fit(base).a
    note(record_property, f"max |lambda - cos(t/2)| = {err:.1e}, a = {a:.6f}")
    assert err < 1e-3
    assert abs(a - 0.125) <= 0.002


@pytest.mark.acceptance(4, "lattice LLT oracle, doubling/digit")
def test_criterion_4_lattice_oracle(record_property):
    base = discretize(get_system("doubling-digit"))
    v4 = lattice_llt_oracle(base, None, 4, 2).integral
    assert abs(v4 - 0.375) < 1e-12
    n = 400
    oracle = lattice_llt_oracle(base, None, n, n // 2).integral
    binom = math.exp(math.lgamma(n + 1) - 2 * math.lgamma(n // 2 + 1) - n * math.log(2))
    scaled = 0.5 * math.sqrt(n) * oracle
    # the sqrt(2/pi)-normalized Gaussian prediction: b sqrt(n) P = 1 / sqrt(2 pi)
    pred = math.sqrt(2 / math.pi) / 2
    note(record_property, f"n=4: {v4!r}; n=400 scaled {scaled:.6f} vs {pred:.6f}")
    assert abs(oracle - binom) < 1e-12
    assert abs(scaled / pred - 1) < 0.01
    assert abs(0.5 * math.sqrt(n) * binom / pred - 1) < 0.01


@pytest.mark.acceptance(5, "semiflow Con-LLT, r = 1 doubling/digit at t = 256")
def test_criterion_5_con_llt(record_property):
    start = time.perf_counter()
    exp = LLTExperiment(get_system("doubling-digit"), times=(256.0,))
    p = estimate_con_llt(exp)[0]
    elapsed = time.perf_counter() - start
    assert len(p.values) == 16
    assert p.target == pytest.approx(GAUSS0 * exp.nu_n(exp.A) * 1.0)
    note(record_property, f"max rel err {p.max_rel_error:.2e}, spread {p.spread:.2e}, {elapsed:.2f} s")
    assert p.max_rel_error < 0.10
    assert p.spread < 0.10
    assert elapsed < 120


@pytest.mark.acceptance(6, "splitting into central (I) and off-centre (II) parts")
def test_criterion_6_split(record_property):
    exp = LLTExperiment(get_system("roof-two-level"))
    fit = fit_split_eps(exp, 50.0)
    worst = 0.0
    for M in (1, 2, 3, 4):
        rep = split_I_II(exp, M, 80.0)
        assert rep.II_value <= fit.eps(M), f"M={M}: b II = {rep.II_value} > eps = {fit.eps(M)}"
        worst = max(worst, rep.II_value / fit.eps(M))
    rep4 = split_I_II(exp, 4, 80.0)
    rel = rep4.I_value / rep4.target - 1
    note(record_property, f"max b II / eps = {worst:.2e}; I(M=4) rel err {rel:.2e}")
    assert abs(rel) < 0.10


@pytest.mark.acceptance(7, "deviation bound and extended LLT estimate on held-out grids")
def test_criterion_7_bounds(record_property):
    sys_ = get_system("roof-two-level")
    dev = deviation_bound_check(LLTExperiment(sys_), [20, 40, 60, 80, 100], [30, 50, 70, 90])
    ext = extended_llt_ratio(sys_, [8, 16, 32, 64], [12, 24, 48, 96])
    note(record_property, f"deviation held-out {dev.test_max_ratio:.4f}, extended held-out {ext.test_max_ratio:.4f}")
    for rep in (dev, ext):
        assert len(rep.test) > 0
        assert rep.train_max_ratio <= 1.0 + 1e-9
        assert rep.test_max_ratio <= 1.0 + 1e-9


@pytest.mark.acceptance(8, "rational weak mixing, Z-cover with centred aperiodic digit")
def test_criterion_8_rwm(record_property):
    rep = rwm_cesaro(get_system("roof-const"), N_grid=(16, 64, 256, 1024))
    note(record_property, f"D = {[round(d, 5) for d in rep.D]}, ratio {rep.ratio_last_first:.3f}, "
                          f"loss {rep.mass_loss:.1e}")
    assert all(a > b for a, b in zip(rep.D, rep.D[1:]))
    assert rep.D[-1] < 0.15 * rep.D[0]
    assert rep.mass_loss < 1e-6


@pytest.mark.acceptance(9, "order-1 Krickeberg and order-2 Cesaro averages")
def test_criterion_9_order2(record_property):
    rep = order2_rwm(get_system("zcover-sft"), N_grid=(16, 64, 256), krickeberg_t=128)
    note(record_property, f"Krickeberg rel err {rep.krickeberg_rel_error:.2e}; "
                          f"Cesaro N=16 {rep.cesaro[0]:.4f}, N=256 {rep.cesaro[-1]:.4f}")
    assert abs(rep.krickeberg_rel_error) < 0.15
    assert rep.cesaro[-1] < rep.cesaro[0]


@pytest.mark.acceptance(10, "structural invariant suite")
def test_criterion_10_invariants(record_property):
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         str(TESTS / "test_cocycle.py"), str(TESTS / "test_dynamics.py")],
        capture_output=True, text=True)
    elapsed = time.perf_counter() - start
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    note(record_property, f"{tail}; {elapsed:.1f} s single-threaded")
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert elapsed < 300
