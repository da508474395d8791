"""Continuous-time random walks: sampler, exact oracle and suspension realization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .stable import ScalingSequence, StableLaw, density


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CTRWModel:
    """Jumps at Poisson(intensity) epochs with an atomic lattice jump law."""

    intensity: float
    jumps: Mapping[int, float]
    law: StableLaw | None = None
    scaling: ScalingSequence | None = None
    kappa: int = 1

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")
        total = sum(self.jumps.values())
        if abs(total - 1) > 1e-12 or any(p < 0 for p in self.jumps.values()):
            raise ValueError("jump law must be a probability vector")
        if any(int(k) != k for k in self.jumps):
            raise ValueError("lattice jumps must be integers")

    @property
    def support(self) -> tuple[int, int]:
        ks = [int(k) for k, p in self.jumps.items() if p > 0]
        return min(ks), max(ks)

    @property
    def second_moment(self) -> float:
        return float(sum(k * k * p for k, p in self.jumps.items()))

    def default_scaling(self) -> ScalingSequence:
        return self.scaling or ScalingSequence(2.0, math.sqrt(self.second_moment))

    def default_law(self) -> StableLaw:
        return self.law or StableLaw.gaussian(0.5)

    def pmf_vector(self) -> tuple[np.ndarray, int]:
        lo, hi = self.support
        v = np.zeros(hi - lo + 1)
        for k, p in self.jumps.items():
            v[int(k) - lo] += p
        return v, lo


def simple_walk(intensity: float = 1.0) -> CTRWModel:
    return CTRWModel(intensity, {-1: 0.5, 1: 0.5})


def sample_ctrw(model: CTRWModel, t: float, rng: np.random.Generator, size: int | None = None):
    """S^(t) = sum_{k <= N} X_k with N ~ Poisson(intensity * t)."""
    n = rng.poisson(model.intensity * t, size=size)
    vals = np.array(sorted(model.jumps), dtype=np.int64)
    probs = np.array([model.jumps[k] for k in sorted(model.jumps)])
    if size is None:
        return int(rng.choice(vals, size=int(n), p=probs).sum()) if n else 0
    n = np.atleast_1d(n)
    total = int(n.sum())
    draws = rng.choice(vals, size=total, p=probs)
    owner = np.repeat(np.arange(n.size), n)
    return np.bincount(owner, weights=draws, minlength=n.size).astype(np.int64)


@dataclass(frozen=True)
class ExactDist:
    """Law of S^(t) on the window ``offset + arange(len(probs))``."""

    probs: np.ndarray
    offset: int
    tail_bound: float
    n_max: int

    def __call__(self, k: int) -> float:
        i = int(k) - self.offset
        return float(self.probs[i]) if 0 <= i < len(self.probs) else 0.0

    def window(self, ks: Sequence[int]) -> float:
        return float(sum(self(k) for k in ks))


def exact_table(model: CTRWModel, t: float, truncation_sigmas: float = 12.0) -> ExactDist:
    """Poisson mixture of convolution powers, truncated at lam t + s sqrt(lam t) or later."""
    mu = model.intensity * t
    if mu == 0:
        return ExactDist(np.array([1.0]), 0, 0.0, 0)
    n_max = int(math.ceil(mu + truncation_sigmas * math.sqrt(mu)))
    # the sigma rule is loose for small mu; also push the tail below 1e-16
    n_max = max(n_max, int(stats.poisson.isf(1e-16, mu)) + 1)
    f, lo = model.pmf_vector()
    width = len(f)
    size = n_max * (width - 1) + 1
    probs = np.zeros(size)
    conv = np.array([1.0])
    w = stats.poisson.pmf(np.arange(n_max + 1), mu)
    # f^{*n} is supported on n*lo + [0, n*(width-1)]; index relative to n_max*lo
    for n in range(n_max + 1):
        shift = (n - n_max) * lo
        probs[shift: shift + len(conv)] += w[n] * conv
        if n < n_max:
            conv = np.convolve(conv, f)
    tail = float(stats.poisson.sf(n_max, mu))
    return ExactDist(probs, n_max * lo, tail, n_max)


def exact_dist(model: CTRWModel, t: float, k: int, truncation_sigmas: float = 12.0) -> float:
    tab = exact_table(model, t, truncation_sigmas)
    p = tab(k)
    if 0 < p < tab.tail_bound:
        warnings.warn(f"probability {p:.2e} below the truncation tail bound {tab.tail_bound:.2e}",
                      TruncationWarning)
    return p


def convolution_power(model: CTRWModel, n: int) -> tuple[np.ndarray, int]:
    f, lo = model.pmf_vector()
    out = np.array([1.0])
    for _ in range(n):
        out = np.convolve(out, f)
    return out, n * lo


def bessel_series(t: float, terms: int = 60) -> float:
    """e^-t sum_m (t/2)^{2m} / (m!)^2 = e^-t I_0(t)."""
    return float(sum(math.exp(-t) * (t / 2) ** (2 * m) / math.factorial(m) ** 2 for m in range(terms)))


@dataclass
class CTRWCheck:
    t: float
    value: float
    target: float
    rel_error: float
    b: float
    drift: int
    window: tuple

    def as_row(self) -> tuple:
        return (self.t, self.value, self.target, self.rel_error)


def ctrw_llt_check(model: CTRWModel, t: float, z: float = 0.0, U: Sequence[int] = (0,),
                   drift: str = "ceil") -> CTRWCheck:
    """b(lam t) P(S^(t) in k(t) + U) against m(U) f_S(z), k(t) = ceil(z b(lam t))."""
    b = model.default_scaling()(model.intensity * t)
    x = z * b
    k = int(math.ceil(x)) if drift == "ceil" else int(round(x))
    tab = exact_table(model, t)
    val = b * tab.window([k + u for u in U])
    target = len(set(U)) * density(model.default_law(), z)
    return CTRWCheck(float(t), val, target, val / target - 1, b, k, tuple(U))


# ---------------------------------------------------------------------------
# suspension realization over (G x R_+)^N


@dataclass
class RealizationReport:
    t: float
    samples: int
    tv_distance: float
    empirical: dict
    exact: dict
    one_jump_empirical: dict = field(default_factory=dict)
    one_jump_exact: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CTRWSuspension:
    """Shift on (G x R_+)^N with iid marks (jump, exponential roof of mean 1/lam).

    r(x) is the first roof mark and phi(x) the first jump. Start points are
    drawn from nu normalized: the first mark is size-biased (Gamma(2, 1/lam))
    and the height uniform under it.
    """

    model: CTRWModel

    def sample_jump_cocycle(self, t: float, size: int, rng: np.random.Generator):
        lam = self.model.intensity
        vals = np.array(sorted(self.model.jumps), dtype=np.int64)
        probs = np.array([self.model.jumps[k] for k in sorted(self.model.jumps)])
        r1 = rng.gamma(2.0, 1.0 / lam, size=size)
        y = rng.random(size) * r1
        J = np.zeros(size, dtype=np.int64)
        N = np.zeros(size, dtype=np.int64)
        rem = y + t - r1  # time left after the first renewal
        active = rem >= 0
        J[active] += rng.choice(vals, size=int(active.sum()), p=probs)
        N[active] += 1
        while active.any():
            idx = np.flatnonzero(active)
            r = rng.exponential(1.0 / lam, size=idx.size)
            rem[idx] -= r
            go = rem[idx] >= 0
            step = idx[go]
            J[step] += rng.choice(vals, size=step.size, p=probs)
            N[step] += 1
            active[idx[~go]] = False
        return J, N


def build_suspension_realization(model: CTRWModel, t: float = 20.0, samples: int = 1_000_000,
                                 seed: int = 0) -> RealizationReport:
    """Compare the law of J(t) under nu with the exact CTRW law (total variation)."""
    rng = np.random.default_rng(seed)
    susp = CTRWSuspension(model)
    J, N = susp.sample_jump_cocycle(t, samples, rng)
    ks, counts = np.unique(J, return_counts=True)
    emp = {int(k): c / samples for k, c in zip(ks, counts)}
    tab = exact_table(model, t)
    support = set(emp) | {tab.offset + i for i in np.flatnonzero(tab.probs > 0)}
    tv = 0.5 * sum(abs(emp.get(k, 0.0) - tab(k)) for k in support)
    exact = {k: tab(k) for k in sorted(emp)}
    mu = model.intensity * t
    one = N == 1
    oj_emp = {int(k): float(np.mean(one & (J == k))) for k in model.jumps}
    oj_exact = {int(k): math.exp(-mu) * mu * p for k, p in model.jumps.items()}
    return RealizationReport(float(t), samples, float(tv), emp, exact, oj_emp, oj_exact)
