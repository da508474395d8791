"""Local limit estimators, splitting and bound checks, rational weak mixing.

All exact-mode quantities go through the aligned chain of a cocycle system.
The measure ``nu_n`` is the suspension measure normalized to a probability.
The un-normalized total mass is ``E(r)`` and is reported alongside.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .cocycle import CocycleSystem
from .dynamics import EmptyCylinderError, admissible_words, word_measure
from .stable import ScalingSequence, StableLaw, density, gaussian_density
from .transfer import (
    AlignedSystem,
    discretize,
    green_kubo,
    path_terms,
    renewal_table,
)


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# experiment description


@dataclass(frozen=True)
class RectSet:
    """Cylinder union times a height interval; ``words=None`` is all of X."""

    words: tuple | None = None
    heights: tuple[float, float] = (0.0, 1.0)

    @property
    def empty(self) -> bool:
        return (self.words is not None and len(self.words) == 0) or self.heights[1] <= self.heights[0]


@dataclass
class LLTExperiment:
    system: CocycleSystem
    A: RectSet = field(default_factory=RectSet)
    B: RectSet = field(default_factory=RectSet)
    U: tuple = (0,)
    z: float = 0.0
    times: tuple = (64.0,)
    samples: int = 100_000
    law: StableLaw | None = None
    scaling: ScalingSequence | None = None
    center: bool = True

    def __post_init__(self):
        self._base = None
        for S in (self.A, self.B):
            if S.empty:
                continue
            ind = self.base.indicator(S.words) > 0
            inf_r = float(self.base.roof[ind].min())
            if S.heights[0] < 0 or S.heights[1] > inf_r + 1e-12:
                raise ValueError("height interval must lie inside [0, inf r) on the cylinder")

    @property
    def base(self) -> AlignedSystem:
        if self._base is None:
            self._base = discretize(self.system)
        return self._base

    @property
    def stable_law(self) -> StableLaw:
        return self.law or StableLaw.gaussian(0.5)

    @property
    def b(self) -> ScalingSequence:
        if self.scaling is not None:
            return self.scaling
        var = renewal_variance(self.base)
        if var <= 0:
            raise ValueError("degenerate Green-Kubo variance")
        return ScalingSequence(2.0, math.sqrt(var))

    def b_of_t(self, t: float) -> float:
        return self.b(self.base.intensity * t)

    def drift(self, t: float) -> float:
        lam = self.base.intensity
        mean = float(self.base.mean_phi[0]) if self.center else 0.0
        x = self.z * self.b_of_t(t) + lam * t * mean
        return float(round(x)) if self.system.group.lattice else x

    def nu_n(self, S: RectSet) -> float:
        return nu_normalized(self.system, self.base, S)

    def window_mass(self) -> float:
        if self.system.group.lattice:
            return float(len(set(self.U)))
        return float(sum(b - a for a, b in self.U))

    def f_target(self) -> float:
        return density(self.stable_law, self.z)


def renewal_variance(base: AlignedSystem) -> float:
    """Per-step variance for J(t): Green-Kubo of phi - (E phi / E r) r.

    J(t) / sqrt(lam t) has variance tending to this value. It reduces to the
    variance of phi when phi is centred or the roof is constant.
    """
    rho = float(base.mean_phi[0]) / base.mean_roof
    return float(green_kubo(base, base.phi[:, 0] - rho * base.roof)[0, 0])


def nu_normalized(sys: CocycleSystem, base: AlignedSystem, S: RectSet) -> float:
    if S.empty:
        return 0.0
    m = float(base.mu @ base.indicator(S.words))
    return m * (S.heights[1] - S.heights[0]) / base.mean_roof


# ---------------------------------------------------------------------------
# reports


@dataclass
class LLTPoint:
    t: float
    estimate: float
    stderr: float
    target: float
    rel_error: float
    b: float
    drift: float
    mode: str
    normalization: str = "normalized"
    budget_insufficient: bool = False

    def as_dict(self):
        return asdict(self)


@dataclass
class ConLLTPoint:
    t: float
    values: list
    target: float
    max_rel_error: float
    spread: float
    b: float
    drift: float
    mass_loss: float = 0.0

    def as_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Int-LLT


def _level_range(base: AlignedSystem, lo: float, hi: float) -> range:
    """Integer renewal levels R with R / q in [lo, hi)."""
    q = base.q
    return range(max(math.ceil(lo * q - 1e-9), 0), max(math.ceil(hi * q - 1e-9), 0))


def _fiber_atoms(exp: LLTExperiment, t: float) -> list[int]:
    x = int(exp.drift(t))
    return [x + int(u) for u in exp.U]


def _int_exact(exp: LLTExperiment) -> list[LLTPoint]:
    base = exp.base
    if not exp.system.group.lattice or base.q is None:
        raise ValueError("exact mode needs a lattice group and a rational roof")
    target_base = exp.f_target() * exp.nu_n(exp.A) * exp.nu_n(exp.B) * exp.window_mass()
    out = []
    if exp.A.empty or exp.B.empty or not exp.U:
        return [LLTPoint(float(t), 0.0, 0.0, target_base, -1.0 if target_base else 0.0, exp.b_of_t(t),
                         exp.drift(t), "exact") for t in exp.times]
    a0, a1 = exp.A.heights
    c0, c1 = exp.B.heights
    t_max = max(exp.times)
    R_max = math.ceil(base.q * (t_max + a1)) + 1
    keep = sorted({k for t in exp.times for k in _fiber_atoms(exp, t)})
    L = max(abs(k) for k in keep) + 1
    L = max(L, int(np.max(np.abs(base.phi))) * (R_max // int(base.roof_units.min()) + 1))
    table = renewal_table(base, base.indicator(exp.A.words), R_max, L=L, keep=keep)
    wB = base.mu * base.indicator(exp.B.words)
    lam = base.intensity
    for t in exp.times:
        ks = _fiber_atoms(exp, t)
        total = 0.0
        for R in _level_range(base, t + a0 - c1, t + a1 - c0 + 1.0 / base.q):
            r = R / base.q
            ell = max(0.0, min(c1, t + a1 - r) - max(c0, t + a0 - r))
            if ell <= 0:
                continue
            total += ell * float(wB @ table.value(R, ks))
        b = exp.b_of_t(t)
        # the suspension measure is normalized by E(r): one factor lam
        est = b * lam * total
        rel = est / target_base - 1 if target_base else 0.0
        out.append(LLTPoint(float(t), est, 0.0, target_base, rel, b, exp.drift(t), "exact"))
    return out


def _mc_chunk(args):
    (W_rows, phi, roof, f_int, f_A, f_B, hA, hB, U, lattice, t, drift, n, seed) = args
    rng = np.random.default_rng(seed)
    nb = len(roof)
    # start bin size-biased by the roof: exact nu-sampling on the aligned chain
    p0 = f_int * roof
    p0 = p0 / p0.sum()
    state = rng.choice(nb, size=n, p=p0)
    y = rng.random(n) * roof[state]
    okA = (f_A[state] > 0) & (y >= hA[0]) & (y < hA[1])
    rem = y + t
    J = np.zeros(n)
    cum = np.cumsum(W_rows, axis=1)
    active = np.ones(n, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        r = roof[state[idx]]
        go = r <= rem[idx]
        stop = idx[~go]
        active[stop] = False
        mv = idx[go]
        if mv.size == 0:
            break
        J[mv] += phi[state[mv]]
        rem[mv] -= r[go]
        u = rng.random(mv.size)
        state[mv] = np.minimum((u[:, None] > cum[state[mv]]).sum(axis=1), nb - 1)
    okB = (f_B[state] > 0) & (rem >= hB[0]) & (rem < hB[1])
    d = J - drift
    if lattice:
        okU = np.isin(np.rint(d).astype(np.int64), np.asarray(U, dtype=np.int64))
    else:
        okU = np.zeros(n, dtype=bool)
        for a, b in U:
            okU |= (d >= a) & (d < b)
    hit = (okA & okB & okU).astype(float)
    return float(hit.sum()), float((hit ** 2).sum()), n


def mc_seeds(master: int, workers: int) -> list[int]:
    return [master ^ i for i in range(workers)]


def _int_mc(exp: LLTExperiment, seed: int, workers: int = 1) -> list[LLTPoint]:
    base = exp.base
    target = exp.f_target() * exp.nu_n(exp.A) * exp.nu_n(exp.B) * exp.window_mass()
    out = []
    M = base.ulam.matrix
    phi = base.phi[:, 0]
    for ti, t in enumerate(exp.times):
        chunks = []
        per = [exp.samples // workers + (1 if i < exp.samples % workers else 0) for i in range(workers)]
        for i, s in enumerate(mc_seeds(seed + 7919 * ti, workers)):
            chunks.append((M, phi, base.roof, base.mu, base.indicator(exp.A.words), base.indicator(exp.B.words),
                           exp.A.heights, exp.B.heights, tuple(exp.U), exp.system.group.lattice, float(t),
                           exp.drift(t), per[i], s))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                res = list(pool.map(_mc_chunk, chunks))
        else:
            res = [_mc_chunk(c) for c in chunks]
        s1 = sum(r[0] for r in res)
        s2 = sum(r[1] for r in res)
        n = sum(r[2] for r in res)
        mean = s1 / n
        var = max(s2 / n - mean ** 2, 0.0)
        b = exp.b_of_t(t)
        est, se = b * mean, b * math.sqrt(var / n)
        rel = est / target - 1 if target else 0.0
        out.append(LLTPoint(float(t), est, se, target, rel, b, exp.drift(t), "mc",
                            budget_insufficient=bool(target and 1.96 * se > 0.5 * target)))
    return out


def estimate_int_llt(exp: LLTExperiment, mode: str = "exact", seed: int | None = None,
                     workers: int = 1) -> list[LLTPoint]:
    """b(lam t) nu_n(A & Phi_t^-1 B & [J(t) in x(t) + U]) against f_S(z) nu_n(A) nu_n(B) m(U)."""
    if mode == "exact":
        return _int_exact(exp)
    if mode == "mc":
        if seed is None:
            raise ValueError("Monte Carlo mode needs an explicit seed")
        return _int_mc(exp, seed, workers)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Con-LLT


def default_eval_points(base: AlignedSystem, count: int = 16) -> list[tuple[int, float]]:
    """``count`` (bin, height) pairs spread over bins and heights."""
    pts = []
    golden = (math.sqrt(5) - 1) / 2
    for k in range(count):
        j = k % base.nbins
        frac = (0.1 + golden * k) % 1.0
        pts.append((j, float(frac * min(base.roof[j], 1.0))))
    return pts


def estimate_con_llt(exp: LLTExperiment, eval_points: Sequence[tuple[int, float]] | None = None):
    """b(lam t) Phi_t-hat(1_{A & [J in x(t) + U]}) at (bin, height) points."""
    base = exp.base
    if base.q is None or not exp.system.group.lattice:
        raise ValueError("conditional estimator needs the exact transfer mode; use estimate_int_llt(mode='mc')")
    pts = list(eval_points) if eval_points is not None else default_eval_points(base)
    for j, y in pts:
        if not (0 <= j < base.nbins and 0 <= y < base.roof[j]):
            raise ValueError(f"eval point {(j, y)} outside the suspension")
    target = exp.f_target() * exp.nu_n(exp.A) * exp.window_mass()
    a0, a1 = exp.A.heights
    t_max = max(exp.times)
    R_max = math.ceil(base.q * (t_max + a1)) + 1
    keep = sorted({k for t in exp.times for k in _fiber_atoms(exp, t)})
    L = max(max(abs(k) for k in keep) + 1,
            int(np.max(np.abs(base.phi))) * (R_max // int(base.roof_units.min()) + 1))
    table = renewal_table(base, base.indicator(exp.A.words), R_max, L=L, keep=keep)
    out = []
    for t in exp.times:
        ks = _fiber_atoms(exp, t)
        b = exp.b_of_t(t)
        vals = []
        for j, y in pts:
            v = 0.0
            for R in _level_range(base, a0 + t - y, a1 + t - y):
                v += float(table.value(R, ks)[j])
            vals.append(b * v)
        vals = np.asarray(vals)
        rel = float(np.max(np.abs(vals / target - 1))) if target else 0.0
        spread = float((vals.max() - vals.min()) / target) if target else 0.0
        out.append(ConLLTPoint(float(t), vals.tolist(), target, rel, spread, b, exp.drift(t), table.mass_loss))
    return out


# ---------------------------------------------------------------------------
# splitting I + II


@dataclass
class SplitReport:
    t: float
    M: float
    I_value: float
    II_value: float
    target: float
    b: float
    eps: float | None = None
    constants: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _terms_at(exp: LLTExperiment, t: float, point: tuple[int, float]) -> np.ndarray:
    """Per-n summands of the conditional transfer sum at one eval point."""
    base = exp.base
    j, y = point
    a0, a1 = exp.A.heights
    n_max = math.floor((t + a1) / base.roof.min()) + 1
    ks = _fiber_atoms(exp, t)
    q = base.q
    lo, hi = math.ceil((a0 + t - y) * q - 1e-9), math.ceil((a1 + t - y) * q - 1e-9)
    terms = np.zeros(n_max + 1)
    for term in path_terms(base, base.indicator(exp.A.words), n_max):
        terms[term.n] = term.window(ks, lo, hi)[j]
    return terms


def split_I_II(exp: LLTExperiment, M: float, t: float, point: tuple[int, float] = (0, 0.5),
               terms: np.ndarray | None = None) -> SplitReport:
    """I: n with |n - lam t| <= M sqrt(t); II: the rest. Both scaled by b(lam t)."""
    base = exp.base
    terms = _terms_at(exp, t, point) if terms is None else terms
    ns = np.arange(len(terms))
    lam = base.intensity
    central = np.abs(ns - lam * t) <= M * math.sqrt(t)
    b = exp.b_of_t(t)
    target = exp.f_target() * exp.nu_n(exp.A) * exp.window_mass()
    return SplitReport(float(t), float(M), b * float(terms[central].sum()), b * float(terms[~central].sum()),
                       target, b)


@dataclass
class SplitFit:
    zeta: float
    K: float
    C: float
    t_train: float

    def eps(self, M: float) -> float:
        """eps(M) = C * 2 int_{M/K}^inf exp(-zeta y^2 / 2) dy."""
        Mp = M / self.K
        return float(self.C * 2 * math.sqrt(2 * math.pi / self.zeta) * stats.norm.sf(Mp * math.sqrt(self.zeta)))


def fit_split_eps(exp: LLTExperiment, t_train: float, point: tuple[int, float] = (0, 0.5)) -> SplitFit:
    """Fit the Gaussian-tail envelope eps(M) on one training time.

    zeta is the inverse variance of (n - lam t)/sqrt(t) under the summands,
    K = max(lam sup r, 1/(lam inf r)) and C makes eps(0) the full scaled mass.
    """
    base = exp.base
    terms = _terms_at(exp, t_train, point)
    if terms.sum() <= 0:
        raise FitError("no mass at the training time")
    lam = base.intensity
    ns = np.arange(len(terms))
    w = terms / terms.sum()
    s2 = float(w @ ((ns - lam * t_train) ** 2) / t_train)
    if s2 <= 0:
        raise FitError("degenerate renewal spread")
    zeta = 1.0 / s2
    K = float(max(lam * base.roof.max(), 1.0 / (lam * base.roof.min())))
    b = exp.b_of_t(t_train)
    C = b * float(terms.sum()) * math.sqrt(zeta / (2 * math.pi))
    return SplitFit(zeta, K, C, float(t_train))


# ---------------------------------------------------------------------------
# deviation bound


@dataclass
class BoundReport:
    constants: dict
    train_max_ratio: float
    test_max_ratio: float
    train: list
    test: list
    passed: bool

    def as_dict(self):
        return asdict(self)


def _deviation_points(exp: LLTExperiment, ts: Sequence[float], M: float, K: float,
                      y: float) -> list[tuple[int, float, float]]:
    base = exp.base
    lam = base.intensity
    a0, a1 = exp.A.heights
    Mp = M / K
    out = []
    for t in ts:
        n_hi = int(math.floor(K * t))
        q = base.q
        lo, hi = math.ceil((a0 + t - y) * q - 1e-9), math.ceil((a1 + t - y) * q - 1e-9)
        ks = _fiber_atoms(exp, t)
        f0 = base.indicator(exp.A.words) if not exp.A.empty else np.zeros(base.nbins)
        for term in path_terms(base, f0, n_hi):
            n = term.n
            if n < t / K or abs(n - lam * t) <= Mp * math.sqrt(n):
                continue
            v = float(np.max(term.window(ks, lo, hi)))
            out.append((n, float(t), v))
    return out


def _dev_shape(n, t, lam, gam, kappa=1):
    n, t = np.asarray(n, float), np.asarray(t, float)
    return (np.exp(-gam * (n - lam * t) ** 2 / t) / np.sqrt(t) + n ** -1.5) / t ** (kappa / 2)


def deviation_bound_check(exp: LLTExperiment, t_train: Sequence[float], t_test: Sequence[float],
                          M: float = 1.0, y: float = 0.5, tol: float = 1e-9) -> BoundReport:
    """Fit (Gamma, gamma) of the off-centre deviation bound and test it on held-out times.

    gamma is half the Gaussian rate regressed from log(t v) against
    (n - lam t)^2 / t, Gamma the smallest constant covering the training grid.
    """
    base = exp.base
    lam = base.intensity
    K = float(max(lam * base.roof.max(), 1.0 / (lam * base.roof.min())))
    tr = np.array(_deviation_points(exp, t_train, M, K, y)).reshape(-1, 3)
    te = np.array(_deviation_points(exp, t_test, M, K, y)).reshape(-1, 3)
    if tr.size == 0 or np.all(tr[:, 2] == 0):
        consts = {"Gamma": 0.0, "gamma": float("nan"), "K": K, "M": M}
        return BoundReport(consts, 0.0, 0.0, tr.tolist(), te.tolist(), True)
    n, t, v = tr.T
    qv = (n - lam * t) ** 2 / t
    sel = (v > 0) & (qv < 10)
    if sel.sum() < 3:
        raise FitError("too few positive training points in the Gaussian zone")
    slope, _ = np.polyfit(qv[sel], np.log(v[sel] * t[sel]), 1)
    if slope >= 0:
        raise FitError("empirical log-ratio is not decaying quadratically (periodic cocycle?)")
    gam = -slope / 2
    Gam = float(np.max(v / _dev_shape(n, t, lam, gam)))
    r_tr = v / (Gam * _dev_shape(n, t, lam, gam))
    r_te = te[:, 2] / (Gam * _dev_shape(te[:, 0], te[:, 1], lam, gam)) if te.size else np.zeros(0)
    consts = {"Gamma": Gam, "gamma": float(gam), "K": K, "M": M, "regression_rate": float(-slope)}
    mx_te = float(r_te.max()) if r_te.size else 0.0
    return BoundReport(consts, float(r_tr.max()), mx_te,
                       np.column_stack([tr, r_tr]).tolist(), np.column_stack([te, r_te]).tolist() if te.size else [],
                       bool(r_tr.max() <= 1 + tol and mx_te <= 1 + tol))


# ---------------------------------------------------------------------------
# extended LLT estimate for Psi = (phi, r - E r)


def _extended_points(base: AlignedSystem, ns: Sequence[int]) -> list[tuple[int, float, float, float]]:
    """(n, x_phi, x_roof, sup_bins value) for every reachable lattice point."""
    f0 = np.ones(base.nbins)
    want = set(int(n) for n in ns)
    out = []
    Er = base.mean_roof
    for term in path_terms(base, f0, max(want)):
        if term.n not in want:
            continue
        G = term.G.max(axis=0)
        ka, ra = np.nonzero(G > 0)
        for a, c in zip(ka, ra):
            x1 = term.phi_lo + a
            x2 = (term.R_lo + c) / base.q - term.n * Er
            out.append((term.n, float(x1), float(x2), float(G[a, c])))
    return out


def extended_llt_ratio(sys_or_base, n_train: Sequence[int], n_test: Sequence[int],
                       tol: float = 1e-9) -> BoundReport:
    """Fit Gamma in Gamma / n^{d/2} (exp(-<gamma x, x>/n) + Gamma / n), d = 2.

    gamma = Sigma^-1 / 4 from the Green-Kubo covariance Sigma of Psi (half the
    Gaussian rate), and Gamma >= 1 is the smallest constant covering training.
    The window U is one lattice cell of the (phi, q r) lattice.
    """
    base = sys_or_base if isinstance(sys_or_base, AlignedSystem) else discretize(sys_or_base)
    psi = np.column_stack([base.phi[:, 0], base.roof])
    Sigma = green_kubo(base, psi)
    if np.linalg.det(Sigma) <= 1e-14:
        raise FitError("degenerate covariance for Psi")
    gamma = np.linalg.inv(Sigma) / 4.0
    d = 2

    def quad(rows):
        X = rows[:, 1:3]
        return np.einsum("ij,jk,ik->i", X, gamma, X) / rows[:, 0]

    tr = np.array(_extended_points(base, n_train))
    te = np.array(_extended_points(base, n_test))
    n = tr[:, 0]
    V = tr[:, 3] * n ** (d / 2)
    e = np.exp(-quad(tr))
    # Gamma^2 / n + Gamma e - V = 0
    roots = n * (-e + np.sqrt(e ** 2 + 4 * V / n)) / 2
    Gam = max(1.0, float(roots.max()))

    def ratio(rows):
        nn = rows[:, 0]
        bound = Gam / nn ** (d / 2) * (np.exp(-quad(rows)) + Gam / nn)
        return rows[:, 3] / bound

    r_tr, r_te = ratio(tr), ratio(te)
    consts = {"Gamma": Gam, "gamma": gamma.tolist(), "Sigma": Sigma.tolist(), "d": d}
    return BoundReport(consts, float(r_tr.max()), float(r_te.max()),
                       np.column_stack([tr, r_tr]).tolist(), np.column_stack([te, r_te]).tolist(),
                       bool(r_tr.max() <= 1 + tol and r_te.max() <= 1 + tol))


# ---------------------------------------------------------------------------
# rational weak mixing


@dataclass
class RWMReport:
    N_grid: list
    D: list
    a: list
    u: list
    mass_loss: float
    L: int
    decreasing: bool
    ratio_last_first: float
    constants: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FiberSet:
    """C = (cylinder x heights) x {h} in the skew product."""

    rect: RectSet = field(default_factory=RectSet)
    h: int = 0


def _sigma(base: AlignedSystem) -> float:
    return math.sqrt(renewal_variance(base))


def rwm_cesaro(sys: CocycleSystem, C: FiberSet = FiberSet(), tau: float = 1.0,
               N_grid: Sequence[int] = (16, 64, 256, 1024), eval_points: Sequence[tuple[int, float]] | None = None,
               L: int | None = None, max_loss: float = 1e-6) -> RWMReport:
    """D(N) = a(N)^-1 sum_{k <= N} sup_pts |Phi^(J)_{tau k} 1_C - u_k mu(C)|.

    Eval points sit in the zero fiber; u_k = f(0) / b(lam tau k).
    """
    base = discretize(sys)
    if base.q is None or not sys.group.lattice:
        raise ValueError("needs a lattice cocycle with rational roof")
    lam = base.intensity
    sig = _sigma(base)
    f0 = gaussian_density(0.5, 0.0)
    N_max = max(N_grid)
    t_max = tau * N_max
    a0, a1 = C.rect.heights
    if L is None:
        L = int(math.ceil(10 * sig * math.sqrt(lam * t_max)))
    R_max = math.ceil(base.q * (t_max + a1)) + 1
    fset = base.indicator(C.rect.words) if not C.rect.empty else np.zeros(base.nbins)
    table = renewal_table(base, fset, R_max, L=L, keep=[-C.h], max_loss=max_loss)
    pts = list(eval_points) if eval_points is not None else default_eval_points(base, 4)
    muC = nu_normalized(sys, base, C.rect)
    devs, us = [], []
    for k in range(1, N_max + 1):
        t = tau * k
        u = f0 / (sig * math.sqrt(lam * t))
        worst = 0.0
        for j, y in pts:
            v = 0.0
            for R in _level_range(base, a0 + t - y, a1 + t - y):
                v += float(table.value(R, [-C.h])[j])
            worst = max(worst, abs(v - u * muC))
        devs.append(worst)
        us.append(u)
    devs, us = np.asarray(devs), np.asarray(us)
    D = [float(devs[:N].sum() / us[:N].sum()) for N in N_grid]
    a = [float(us[:N].sum()) for N in N_grid]
    dec = all(x > y for x, y in zip(D, D[1:]))
    return RWMReport(list(N_grid), D, a, us[: min(N_grid)].tolist(), table.mass_loss, L, dec,
                     D[-1] / D[0] if D[0] else 0.0, {"sigma": sig, "lambda": lam, "mu_C": muC})


# ---------------------------------------------------------------------------
# Krickeberg order 1 and order 2 on unit-height rectangles


def _kernel_matrices(base: AlignedSystem, t_values: Sequence[int], L: int) -> tuple[dict, float]:
    """K_t[i, j] = sum_n T^n(e_i 1[phi_n = 0, r_n = t])(j) for integer t."""
    R_max = int(max(t_values)) * base.q
    table = renewal_table(base, np.eye(base.nbins), R_max, L=L, keep=[0])
    return {int(t): table.H[int(t) * base.q, :, :, 0] for t in t_values}, table.mass_loss


@dataclass
class Order2Report:
    krickeberg_t: float
    krickeberg_value: float
    krickeberg_target: float
    krickeberg_rel_error: float
    N_grid: list
    cesaro: list
    mass_loss: float
    constants: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def krickeberg_order1(sys: CocycleSystem, A: Sequence | None = None, B: Sequence | None = None,
                      t: int = 128) -> dict:
    """nu_n(A & g_t B) in the zero fiber against f(0)/b(lam t) nu_n(A) nu_n(B)."""
    base = discretize(sys)
    lam, sig = base.intensity, _sigma(base)
    L = int(math.ceil(10 * sig * math.sqrt(lam * t)))
    K, loss = _kernel_matrices(base, [t], L)
    fa, fb = base.indicator(A), base.indicator(B)
    val = lam * float((base.mu * fb) @ (fa @ K[t]))
    u = gaussian_density(0.5, 0.0) / (sig * math.sqrt(lam * t))
    nA = float(base.mu @ fa) * lam
    nB = float(base.mu @ fb) * lam
    target = u * nA * nB
    return {"t": t, "value": val, "target": target, "rel_error": val / target - 1 if target else 0.0,
            "mass_loss": loss}


def order2_rwm(sys: CocycleSystem, A: Sequence | None = None, B: Sequence | None = None,
               C: Sequence | None = None, tau: int = 1, N_grid: Sequence[int] = (16, 64, 256),
               krickeberg_t: int = 128) -> Order2Report:
    """Cesaro averages of |nu_n(A & g_{tau k} B & g_{2 tau k} C) - nu_n(A)nu_n(B)nu_n(C) u(tau k)^2|.

    Sets are unit-height rectangles in the zero fiber, so with integer roof
    levels the height is preserved and the triple correlation factors through
    the kernel matrices K_t. Normalization is a2(N) = sum u(tau k)^2.
    """
    base = discretize(sys)
    if int(tau * base.q) != tau * base.q:
        raise ValueError("tau * q must be an integer")
    lam, sig = base.intensity, _sigma(base)
    N_max = max(N_grid)
    t_values = [int(tau * k) for k in range(1, N_max + 1)]
    L = int(math.ceil(10 * sig * math.sqrt(lam * max(max(t_values), krickeberg_t))))
    K, loss = _kernel_matrices(base, sorted(set(t_values) | {krickeberg_t}), L)
    fa, fb, fc = base.indicator(A), base.indicator(B), base.indicator(C)
    nA, nB, nC = (lam * float(base.mu @ f) for f in (fa, fb, fc))
    f0 = gaussian_density(0.5, 0.0)
    terms, u2 = [], []
    for t in t_values:
        Kt = K[t]
        inner = fb * (fa @ Kt)
        tri = lam * float((base.mu * fc) @ (inner @ Kt))
        u = f0 / (sig * math.sqrt(lam * t))
        terms.append(abs(tri - nA * nB * nC * u * u))
        u2.append(u * u)
    terms, u2 = np.asarray(terms), np.asarray(u2)
    ces = [float(terms[:N].sum() / u2[:N].sum()) for N in N_grid]
    kr = krickeberg_order1(sys, A, B, krickeberg_t)
    return Order2Report(float(krickeberg_t), kr["value"], kr["target"], kr["rel_error"], list(N_grid), ces,
                        max(loss, kr["mass_loss"]), {"sigma": sig, "lambda": lam})


# ---------------------------------------------------------------------------
# weak independence


def weak_independence(sys: CocycleSystem, max_total_depth: int = 6, cap: float | None = None) -> dict:
    """max m([uv]) / (m[u] m[v]) over admissible words with |u| + |v| <= max_total_depth."""
    imap = sys.map
    meas: dict[tuple, float] = {}
    for d in range(1, max_total_depth + 1):
        for w in admissible_words(imap, d):
            meas[w] = word_measure(imap, w)
    best, arg = 0.0, None
    for uv, m in meas.items():
        for cut in range(1, len(uv)):
            u, v = uv[:cut], uv[cut:]
            r = m / (meas[u] * meas[v])
            if r > best:
                best, arg = r, (u, v)
    return {"c": best, "argmax": arg, "flagged": bool(cap is not None and best > cap)}
