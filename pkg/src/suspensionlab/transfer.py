"""Ulam discretization, twisted operators and exact lattice oracles.

Aligned bins are cylinders of a fixed depth. On such bins the discretized
transfer operator acts exactly on functions that are constant on bins, so
every oracle below is exact up to floating-point rounding.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .cocycle import CocycleSystem
from .dynamics import ENDPOINT_TOL, IntervalMap, admissible_words, cylinder_interval


class AlignmentError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class NagaevFitError(ValueError):
    pass


class OracleWarning(UserWarning):
    pass


class MassLossError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Ulam operator


@dataclass(frozen=True)
class UlamOperator:
    """Row-stochastic bin transition matrix ``M[i, j] = m(B_i & T^-1 B_j) / m(B_i)``."""

    edges: np.ndarray
    matrix: np.ndarray
    mode: str
    words: tuple | None = None

    @property
    def nbins(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def stationary(self) -> np.ndarray:
        """Stationary bin masses of the chain M."""
        w, v = np.linalg.eig(self.matrix.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        p = np.abs(np.real(v[:, k]))
        return p / p.sum()

    def transfer(self, f: np.ndarray) -> np.ndarray:
        """Lebesgue transfer operator on bin values (densities)."""
        w = self.widths
        return (w * np.asarray(f)) @ self.matrix / w

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(" ".join(repr(float(e)) for e in self.edges) + "\n")
            for row in self.matrix:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        return path


def _bin_matrix(map: IntervalMap, edges: np.ndarray) -> np.ndarray:
    n = len(edges) - 1
    M = np.zeros((n, n))
    cells = map.partition.cells
    for i in range(n):
        a, b = edges[i], edges[i + 1]
        mid = 0.5 * (a + b)
        c = map.partition.locate(mid)
        lo, hi = cells[c]
        if a < lo - ENDPOINT_TOL or b > hi + ENDPOINT_TOL:
            raise AlignmentError(f"bin ({a}, {b}) straddles a partition endpoint")
        br = map.branches[c]
        ya, yb = float(br(a)), float(br(b))
        ylo, yhi = min(ya, yb), max(ya, yb)
        for j in range(n):
            u, v = max(ylo, edges[j]), min(yhi, edges[j + 1])
            if v - u <= 0:
                continue
            pa, pb = map.inverse_branch(c, (u, v))
            M[i, j] = (pb - pa) / (b - a)
    # clean rounding so rows are stochastic to 1e-12
    M[M < 1e-15] = 0.0
    return M / M.sum(axis=1, keepdims=True)


def _check_aligned(map: IntervalMap, edges: np.ndarray) -> None:
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        c = map.partition.locate(0.5 * (a + b))
        lo, hi = map.partition.cells[c]
        if a < lo - ENDPOINT_TOL or b > hi + ENDPOINT_TOL:
            raise AlignmentError(f"bin ({a}, {b}) straddles a partition endpoint")
        br = map.branches[c]
        for y in (float(br(a)), float(br(b))):
            if np.min(np.abs(edges - y)) > ENDPOINT_TOL:
                raise AlignmentError(f"image endpoint {y} of bin {i} is not a bin edge")


def aligned_depth(map: IntervalMap, nbins: int = 1, min_depth: int = 1) -> int:
    """Smallest cylinder depth >= min_depth whose bins are Markov-aligned and at least nbins."""
    for d in range(max(1, min_depth), 24):
        words = admissible_words(map, d)
        if len(words) < nbins:
            continue
        edges = _word_edges(map, words)
        try:
            _check_aligned(map, edges)
        except AlignmentError:
            continue
        return d
    raise AlignmentError("no aligned cylinder depth found")


def _word_edges(map: IntervalMap, words: Sequence[tuple]) -> np.ndarray:
    ivs = [cylinder_interval(map, w) for w in words]
    edges = [ivs[0][0]] + [iv[1] for iv in ivs]
    return np.array(edges)


def ulam_discretize(map: IntervalMap, nbins: int | None = None, mode: str = "aligned",
                    edges: Sequence[float] | None = None, depth: int | None = None) -> UlamOperator:
    """Discretize the transfer operator of ``map``.

    ``mode="aligned"`` uses cylinder bins, or validates explicit ``edges``.
    ``mode="generic"`` uses uniform bins refined by the partition endpoints.
    """
    if nbins is not None and nbins < len(map.partition) and edges is None and mode == "generic":
        raise ValueError("nbins must be at least the number of cells")
    if mode == "aligned":
        words = None
        if edges is None:
            d = depth if depth is not None else aligned_depth(map, nbins or 1)
            words = tuple(admissible_words(map, d))
            edges = _word_edges(map, words)
        edges = np.asarray(edges, dtype=float)
        _check_aligned(map, edges)
        return UlamOperator(edges, _bin_matrix(map, edges), "aligned", words)
    if mode == "generic":
        if edges is None:
            n = nbins or len(map.partition)
            grid = np.linspace(map.partition.lo, map.partition.hi, n + 1)
            edges = np.unique(np.concatenate([grid, map.partition.edges]))
            keep = np.concatenate([[True], np.diff(edges) > ENDPOINT_TOL])
            edges = edges[keep]
        edges = np.asarray(edges, dtype=float)
        return UlamOperator(edges, _bin_matrix(map, edges), "generic", None)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# discretized cocycle system


def _common_denominator(values: np.ndarray, max_den: int = 64) -> int | None:
    fr = [Fraction(float(v)).limit_denominator(max_den) for v in values]
    if any(abs(float(f) - v) > 1e-12 for f, v in zip(fr, values)):
        return None
    q = 1
    for f in fr:
        q = q * f.denominator // math.gcd(q, f.denominator)
    return q


@dataclass(frozen=True)
class AlignedSystem:
    """A cocycle system restricted to aligned cylinder bins.

    ``W[i, j] = mu_i M_ij / mu_j`` so that the transfer operator with respect
    to the invariant measure acts on bin values as ``(T f)_j = sum_i W_ij f_i``.
    """

    system: CocycleSystem
    ulam: UlamOperator
    mu: np.ndarray
    W: np.ndarray
    phi: np.ndarray
    roof: np.ndarray
    q: int | None
    roof_units: np.ndarray | None

    @property
    def nbins(self) -> int:
        return self.ulam.nbins

    @property
    def words(self) -> tuple:
        return self.ulam.words

    @property
    def mean_roof(self) -> float:
        return float(self.mu @ self.roof)

    @property
    def intensity(self) -> float:
        return 1.0 / self.mean_roof

    @property
    def mean_phi(self) -> np.ndarray:
        return self.mu @ self.phi

    def transfer(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f) @ self.W

    def indicator(self, words: Iterable[tuple] | None = None) -> np.ndarray:
        """Bin indicator of a union of cylinders (``None`` is the whole space)."""
        if words is None:
            return np.ones(self.nbins)
        out = np.zeros(self.nbins)
        for w in words:
            w = tuple(w)
            hit = [i for i, b in enumerate(self.words) if b[: len(w)] == w]
            if len(w) > len(self.words[0]):
                raise AlignmentError(f"cylinder {w!r} finer than the bins")
            out[hit] = 1.0
        return out

    def bin_of(self, x: float) -> int:
        idx = int(np.searchsorted(self.ulam.edges, x, side="right") - 1)
        if not (0 <= idx < self.nbins) or x == self.ulam.edges[idx]:
            raise ValueError(f"point {x} on a bin boundary")
        return idx

    @property
    def lattice(self) -> bool:
        return self.system.group.lattice


def discretize(sys: CocycleSystem, nbins: int = 1, depth: int | None = None) -> AlignedSystem:
    d = depth if depth is not None else aligned_depth(sys.map, nbins, min_depth=sys.depth)
    if d < sys.depth:
        raise AlignmentError("bins coarser than the system's cell functions")
    ulam = ulam_discretize(sys.map, mode="aligned", depth=d)
    words = ulam.words
    widths = ulam.widths
    if sys.map.preserves_lebesgue:
        mu = widths.copy()
    else:
        mu = ulam.stationary()
    M = ulam.matrix
    W = mu[:, None] * M / mu[None, :]
    phi = np.array([sys.phi.value(w) for w in words])
    roof = np.array([sys.roof.r.value(w)[0] for w in words])
    q = _common_denominator(roof)
    units = None if q is None else np.rint(roof * q).astype(np.int64)
    return AlignedSystem(sys, ulam, mu, W, phi, roof, q, units)


# ---------------------------------------------------------------------------
# twisted operators and eigenvalues


@dataclass(frozen=True)
class TwistedOperator:
    base: AlignedSystem
    t: tuple
    s: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        t = np.atleast_1d(np.asarray(self.t, dtype=float))
        arg = self.base.phi @ t
        if self.s:
            arg = arg + self.s * (self.base.roof - self.base.mean_roof)
        return np.exp(1j * arg)

    @property
    def matrix(self) -> np.ndarray:
        # (P f)_j = sum_i W_ij e^{i arg_i} f_i
        return self.base.W.T * self.weights[None, :]

    def start_vector(self) -> np.ndarray:
        return np.ones(self.base.nbins, dtype=complex)


def twisted_operator(base: AlignedSystem, t, s: float = 0.0) -> TwistedOperator:
    return TwistedOperator(base, tuple(np.atleast_1d(np.asarray(t, dtype=float)).tolist()), float(s))


@dataclass(frozen=True)
class EigenData:
    lam: complex
    g: np.ndarray
    gap: float
    iterations: int
    residual: float
    degenerate: bool = False


def _second_modulus(P: np.ndarray) -> tuple[float, float]:
    ev = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    return float(ev[0]), float(ev[1]) if len(ev) > 1 else 0.0


def dominant_eig(op: TwistedOperator | np.ndarray, tol: float = 1e-12, max_iter: int = 100_000,
                 rng: np.random.Generator | None = None, start: np.ndarray | None = None) -> EigenData:
    """Power iteration normalized by the entry of maximal modulus."""
    P = op.matrix if isinstance(op, TwistedOperator) else np.asarray(op, dtype=complex)
    if start is None:
        start = op.start_vector() if isinstance(op, TwistedOperator) else np.ones(len(P), complex)
    v = np.asarray(start, dtype=complex)
    v = v / v[np.argmax(np.abs(v))]
    best, stall, restarted = math.inf, 0, False
    lam, res = 0.0 + 0.0j, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        w = P @ v
        k = int(np.argmax(np.abs(w)))
        lam = complex(np.vdot(v, w) / np.vdot(v, v))
        res = float(np.max(np.abs(w - lam * v)))
        if abs(w[k]) < 1e-300:
            lam, res = 0.0j, 0.0
            break
        if res < tol:
            break
        v = w / w[k]
        if res < best * 0.999:
            best, stall = res, 0
        else:
            stall += 1
        if stall > 1000 and not restarted:
            rng = rng or np.random.default_rng(0)
            v = rng.random(len(v)) + 0j
            restarted, stall, best = True, 0, math.inf
    r1, r2 = _second_modulus(P)
    gap = r2 / r1 if r1 > 0 else 0.0
    if res >= tol:
        raise ConvergenceError(f"power iteration did not converge (residual {res:.2e}, gap {gap:.4f})")
    return EigenData(lam, v, gap, it, res, degenerate=gap > 1 - 1e-6)


def eigen_curve(base: AlignedSystem, ts: Sequence[float], s: float = 0.0, **kw) -> list[tuple]:
    rows = []
    for t in ts:
        e = dominant_eig(twisted_operator(base, [t] * base.system.group.kappa, s), **kw)
        rows.append((float(t), e.lam.real, e.lam.imag, abs(e.lam)))
    return rows


def write_eigen_curve_csv(path: str | Path, rows: Sequence[tuple]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_lambda", "im_lambda", "abs_lambda"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return path


def spectral_gap(op: UlamOperator, tol: float = 1e-10, max_iter: int = 10_000) -> dict:
    """|lambda_2| of the Ulam chain by power iteration on the deflated chain.

    A vector that collapses below 1e-13 of its size signals a nilpotent
    complement and gives the estimate 0.
    """
    M = op.matrix
    p = op.stationary()
    D = M.T - np.outer(p, np.ones(len(p)))  # acts on mass vectors, kills the invariant mode
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(len(p))
    v -= p * v.sum()
    v /= np.linalg.norm(v)
    rates: list[float] = []
    est, res = 0.0, 0.0
    for _ in range(max_iter):
        w = D @ v
        nw = float(np.linalg.norm(w))
        if nw < 1e-13:
            est, res, rates = 0.0, 0.0, []
            break
        rates.append(nw)
        v = w / nw
        if len(rates) > 50 and abs(rates[-1] - rates[-2]) < tol:
            break
    if rates:
        tail = rates[-min(20, len(rates)):]
        est = float(np.exp(np.mean(np.log(tail))))
        res = float(abs(rates[-1] - rates[-2])) if len(rates) > 1 else 0.0
    return {"lambda2": est, "residual": res, "mixing": bool(est < 1 - 1e-6)}


# ---------------------------------------------------------------------------
# Nagaev fit


@dataclass(frozen=True)
class NagaevFit:
    """Quadratic fit of -log|lambda(u)| = <gamma u, u> over a twist grid.

    Coordinates are the roof twist s (when the roof is non-constant) followed
    by the displacement twist t. ``a`` is the displacement curvature for
    kappa = 1 and ``a_roof`` the roof-direction curvature.
    """

    gamma: np.ndarray
    coords: tuple[str, ...]
    a: float
    a_roof: float | None
    residual: float
    radius: float
    degenerate: bool


def nagaev_fit(base: AlignedSystem | CocycleSystem, radius: float = 0.1, grid: int = 9,
               include_roof: bool | None = None, tol: float = 1e-13) -> NagaevFit:
    if isinstance(base, CocycleSystem):
        base = discretize(base)
    kappa = base.system.group.kappa
    roof_var = float(np.ptp(base.roof)) > 0
    include_roof = roof_var if include_roof is None else include_roof
    dims = kappa + (1 if include_roof else 0)
    axis = np.linspace(-radius, radius, grid)
    pts = [u for u in itertools.product(axis, repeat=dims) if np.any(np.abs(u) > 1e-15)]
    pairs = [(a, b) for a in range(dims) for b in range(a, dims)]
    X, y = [], []
    for u in pts:
        u = np.asarray(u)
        s, t = (u[0], u[1:]) if include_roof else (0.0, u)
        e = dominant_eig(twisted_operator(base, t, s), tol=tol)
        if abs(e.lam) == 0:
            raise NagaevFitError("eigenvalue vanished inside the fit window")
        y.append(-math.log(abs(e.lam)))
        X.append([u[a] * u[b] * (1 if a == b else 2) for a, b in pairs])
    X, y = np.asarray(X), np.asarray(y)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    G = np.zeros((dims, dims))
    for c, (a, b) in zip(coef, pairs):
        G[a, b] = G[b, a] = c
    resid = float(np.linalg.norm(X @ coef - y) / max(np.linalg.norm(y), 1e-300))
    ev = np.linalg.eigvalsh(G)
    scale = max(np.max(np.abs(ev)), 1e-300)
    degenerate = np.max(np.abs(ev)) < 1e-10
    if not degenerate and ev[0] < -1e-8 * scale:
        raise NagaevFitError(f"fitted gamma is indefinite (eigenvalues {ev})")
    coords = (("s",) if include_roof else ()) + tuple(f"t{i}" for i in range(kappa))
    off = 1 if include_roof else 0
    a = float(G[off, off]) if kappa == 1 else float("nan")
    return NagaevFit(G, coords, 0.0 if degenerate else a, float(G[0, 0]) if include_roof else None,
                     resid, radius, bool(degenerate))


def green_kubo(base: AlignedSystem, values: np.ndarray | None = None) -> np.ndarray:
    """Asymptotic covariance of Birkhoff sums of a bin function (default phi)."""
    f = base.phi if values is None else np.asarray(values, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    mu, M = base.mu, base.ulam.matrix
    n = len(mu)
    fc = f - mu @ f
    Z = np.linalg.inv(np.eye(n) - M + np.outer(np.ones(n), mu))
    S = (Z - np.eye(n)) @ fc  # sum_{k>=1} E[f(x_k) | x_0]
    C = (fc * mu[:, None]).T @ fc
    cross = (fc * mu[:, None]).T @ S
    return C + cross + cross.T


def aperiodicity_diagnostic(base: AlignedSystem, grid: int = 64, exclude: float = 0.05) -> dict:
    """min of 1 - |lambda(t)| over a torus grid away from 0."""
    kappa = base.system.group.kappa
    period = 2 * math.pi if base.lattice else 4 * math.pi
    axis = np.linspace(0.0, period, grid, endpoint=False)
    worst, where = math.inf, None
    for u in itertools.product(axis, repeat=kappa):
        u = np.asarray(u)
        dist = np.min(np.abs(np.stack([u, period - u])), axis=0)
        if np.linalg.norm(dist) < exclude:
            continue
        e = dominant_eig(twisted_operator(base, u))
        if 1 - abs(e.lam) < worst:
            worst, where = 1 - abs(e.lam), u.tolist()
    return {"min_one_minus_abs_lambda": worst, "at": where, "aperiodic": bool(worst > 1e-8)}


# ---------------------------------------------------------------------------
# lattice oracles by torus quadrature


@dataclass(frozen=True)
class OracleResult:
    values: np.ndarray
    integral: float
    points: tuple[int, ...]
    max_imag: float


def _offsets(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ints = np.rint(phi).astype(np.int64)
    lo = ints.min(axis=0)
    return ints - lo, lo


def _evolve_fourier(base: AlignedSystem, f0: np.ndarray, n: int, feats: list[np.ndarray],
                    sizes: list[int]) -> np.ndarray:
    """P^n f0 on a product torus grid; returns array (*sizes, nbins)."""
    mesh = np.meshgrid(*[2 * np.pi * np.arange(N) / N for N in sizes], indexing="ij")
    arg = sum(m[..., None] * f[None, :] for m, f in zip(mesh, feats))
    E = np.exp(1j * arg).reshape(-1, base.nbins)
    V = np.tile(np.asarray(f0, dtype=complex), (E.shape[0], 1))
    for _ in range(n):
        V = (V * E) @ base.W
    return V.reshape(*sizes, base.nbins)


def lattice_llt_table(base: AlignedSystem, A: Iterable[tuple] | None, n: int,
                      points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All values T^n(1_A 1[phi_n = k]) for reachable k.

    Returns ``(ks, table)`` where table has shape (len(ks)..., nbins).
    Only kappa = 1 returns a flat ``ks``; kappa = 2 returns a grid pair.
    """
    if not base.lattice:
        raise ValueError("lattice oracle needs a lattice group")
    kappa = base.system.group.kappa
    f0 = base.indicator(A)
    if n == 0:
        ks = np.zeros((1, kappa), dtype=np.int64)
        return ks, f0[None, :] if kappa == 1 else f0[None, None, :]
    offs, lo = _offsets(base.phi)
    spans = n * offs.max(axis=0)
    sizes = [max(4 * n, int(s) + 1) if points is None else max(points, int(s) + 1) for s in spans]
    feats = [offs[:, d].astype(float) for d in range(kappa)]
    V = _evolve_fourier(base, f0, n, feats, sizes)
    C = np.fft.fftn(V, axes=tuple(range(kappa))) / np.prod(sizes)
    max_imag = float(np.max(np.abs(C.imag)))
    if max_imag > 1e-9:
        warnings.warn(f"quadrature residue {max_imag:.2e}", OracleWarning)
    C = C.real
    sl = tuple(slice(0, int(s) + 1) for s in spans)
    C = C[sl]
    axes = [np.arange(int(s) + 1) + n * int(lo[d]) for d, s in enumerate(spans)]
    return axes, C


def lattice_llt_oracle(base: AlignedSystem | CocycleSystem, A: Iterable[tuple] | None, n: int, k,
                       points: int | None = None) -> OracleResult:
    """T^n(1_A 1[phi_n = k]) and its integral, by trapezoid torus quadrature."""
    if isinstance(base, CocycleSystem):
        base = discretize(base)
    kappa = base.system.group.kappa
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    f0 = base.indicator(A)
    if n == 0:
        vals = f0 if np.all(k == 0) else np.zeros(base.nbins)
        return OracleResult(vals, float(base.mu @ vals), (1,) * kappa, 0.0)
    offs, lo = _offsets(base.phi)
    spans = n * offs.max(axis=0)
    sizes = [max(4 * n, int(s) + 1) if points is None else max(points, int(s) + 1) for s in spans]
    rel = k - n * lo
    if np.any(rel < 0) or np.any(rel > spans):
        return OracleResult(np.zeros(base.nbins), 0.0, tuple(sizes), 0.0)
    feats = [offs[:, d].astype(float) for d in range(kappa)]
    V = _evolve_fourier(base, f0, n, feats, sizes)
    mesh = np.meshgrid(*[2 * np.pi * np.arange(N) / N for N in sizes], indexing="ij")
    phase = np.exp(-1j * sum(m * r for m, r in zip(mesh, rel)))
    vals = np.tensordot(phase, V, axes=(tuple(range(kappa)), tuple(range(kappa)))) / np.prod(sizes)
    max_imag = float(np.max(np.abs(vals.imag)))
    if max_imag > 1e-9:
        warnings.warn(f"quadrature residue {max_imag:.2e}", OracleWarning)
    vals = vals.real
    return OracleResult(vals, float(base.mu @ vals), tuple(sizes), max_imag)


def _window_units(base: AlignedSystem, n: int, I: tuple[float, float]) -> tuple[int, int]:
    """Integer range [lo, hi) of q * r_n with r_n - n E(r) in [I0, I1)."""
    q = base.q
    center = n * base.mean_roof
    lo = math.ceil((I[0] + center) * q - 1e-9)
    hi = math.ceil((I[1] + center) * q - 1e-9)
    return lo, hi


def joint_llt_oracle(base: AlignedSystem | CocycleSystem, A: Iterable[tuple] | None, n: int, k: int,
                     I: tuple[float, float], method: str = "quadrature") -> OracleResult:
    """T^n(1_A 1[phi_n = k] 1[r_n - n E(r) in I]) for kappa = 1.

    ``method="quadrature"`` inverts on a torus grid in t and a finite grid in
    the roof twist. ``method="convolution"`` runs the exact path recursion.
    Both are exact; the second is used by the experiments for speed.
    """
    if isinstance(base, CocycleSystem):
        base = discretize(base)
    if base.system.group.kappa != 1 or not base.lattice:
        raise ValueError("joint oracle implemented for Z-valued displacements")
    if base.q is None:
        raise ValueError("non-lattice roof: use the Monte Carlo estimators")
    f0 = base.indicator(A)
    Rlo, Rhi = _window_units(base, n, I)
    if n == 0:
        hit = k == 0 and Rlo <= 0 < Rhi
        vals = f0 if hit else np.zeros(base.nbins)
        return OracleResult(vals, float(base.mu @ vals), (1, 1), 0.0)
    if method == "convolution":
        term = None
        for term in path_terms(base, f0, n):
            pass
        vals = term.window(k, Rlo, Rhi)
        return OracleResult(vals, float(base.mu @ vals), (0, 0), 0.0)
    offs, lo = _offsets(base.phi)
    roffs = base.roof_units - base.roof_units.min()
    rmin = int(base.roof_units.min())
    span_t, span_s = int(n * offs.max()), int(n * roffs.max())
    sizes = [max(4 * n, span_t + 1), span_s + 1]
    V = _evolve_fourier(base, f0, n, [offs[:, 0].astype(float), roffs.astype(float)], sizes)
    C = np.fft.fft2(V, axes=(0, 1)) / (sizes[0] * sizes[1])
    max_imag = float(np.max(np.abs(C.imag)))
    C = C.real
    kk = k - n * int(lo[0])
    if not (0 <= kk <= span_t):
        return OracleResult(np.zeros(base.nbins), 0.0, tuple(sizes), max_imag)
    a, b = max(Rlo - n * rmin, 0), min(Rhi - n * rmin, span_s + 1)
    vals = C[kk, a:b].sum(axis=0) if b > a else np.zeros(base.nbins)
    return OracleResult(vals, float(base.mu @ vals), tuple(sizes), max_imag)


# ---------------------------------------------------------------------------
# exact convolution engines


@dataclass
class PathTerm:
    """G[j, a, b] = T^n(f0 1[phi_n = phi_lo + a, q r_n = R_lo + b])(bin j)."""

    n: int
    G: np.ndarray
    phi_lo: int
    R_lo: int

    def window(self, k: int | Sequence[int], Rlo: int, Rhi: int) -> np.ndarray:
        ks = np.atleast_1d(k)
        out = np.zeros(self.G.shape[0])
        a0, a1 = max(Rlo - self.R_lo, 0), min(Rhi - self.R_lo, self.G.shape[2])
        if a1 <= a0:
            return out
        for kv in ks:
            a = int(kv) - self.phi_lo
            if 0 <= a < self.G.shape[1]:
                out += self.G[:, a, a0:a1].sum(axis=1)
        return out


def path_terms(base: AlignedSystem, f0: np.ndarray, n_max: int) -> Iterator[PathTerm]:
    """Yield PathTerm for n = 0..n_max by the exact forward recursion."""
    if base.q is None:
        raise ValueError("path recursion needs a rational roof")
    phi = np.rint(base.phi[:, 0]).astype(np.int64)
    R = base.roof_units
    pmin, rmin = int(phi.min()), int(R.min())
    dp, dr = phi - pmin, R - rmin
    G = np.asarray(f0, dtype=float)[:, None, None].copy()
    yield PathTerm(0, G, 0, 0)
    W = base.W
    for n in range(1, n_max + 1):
        H = np.zeros((base.nbins, G.shape[1] + dp.max(), G.shape[2] + dr.max()))
        for i in range(base.nbins):
            gi = G[i]
            if not gi.any():
                continue
            a, b = dp[i], dr[i]
            H[:, a:a + gi.shape[0], b:b + gi.shape[1]] += W[i][:, None, None] * gi[None]
        G = H
        yield PathTerm(n, G, n * pmin, n * rmin)


@dataclass
class RenewalTable:
    """H[R, ..., j, a] = sum_n T^n(f0 1[q r_n = R, phi_n = phis[a]])(bin j).

    Leading batch axes follow ``f0``. Only the displacement values in
    ``phis`` are retained.
    """

    H: np.ndarray
    phis: np.ndarray
    L: int
    mass_loss: float
    q: int

    def value(self, R: int, ks: Sequence[int]) -> np.ndarray:
        shape = self.H.shape[1:-1]
        out = np.zeros(shape)
        if R < 0 or R >= self.H.shape[0]:
            return out
        for k in ks:
            hit = np.flatnonzero(self.phis == int(k))
            if hit.size:
                out = out + self.H[R, ..., hit[0]]
        return out


def renewal_table(base: AlignedSystem, f0: np.ndarray, R_max: int, L: int | None = None,
                  keep: Sequence[int] | None = None, max_loss: float | None = None) -> RenewalTable:
    """Sum over n of the path terms, indexed by the renewal level q r_n.

    The displacement axis is truncated to ``|phi| <= L``; mass pushed outside
    is accumulated (weighted by mu) and reported. ``f0`` may carry leading
    batch axes; ``keep`` selects which displacement values are stored.
    """
    if base.q is None:
        raise ValueError("renewal recursion needs a rational roof")
    phi = np.rint(base.phi[:, 0]).astype(np.int64)
    R = base.roof_units
    if np.any(R < 1):
        raise ValueError("roof units must be positive")
    if L is None:
        L = int(np.max(np.abs(phi))) * (R_max // int(R.min()) + 1)
    f0 = np.asarray(f0, dtype=float)
    batch = f0.shape[:-1]
    width = 2 * L + 1
    phis = np.arange(-L, L + 1) if keep is None else np.asarray(sorted(set(int(k) for k in keep)))
    idx = phis + L
    if np.any((idx < 0) | (idx >= width)):
        raise ValueError("kept displacement outside the truncation window")
    depth = int(R.max()) + 1
    ring = np.zeros((depth,) + batch + (base.nbins, width))
    ring[0, ..., L] = f0
    out = np.zeros((R_max + 1,) + batch + (base.nbins, len(phis)))
    out[0] = ring[0][..., idx]
    W = base.W
    loss = 0.0
    for lvl in range(1, R_max + 1):
        acc = np.zeros(batch + (base.nbins, width))
        for i in range(base.nbins):
            if lvl - R[i] < 0:
                continue
            row = ring[(lvl - R[i]) % depth][..., i, :]
            s = int(phi[i])
            shifted = np.zeros_like(row)
            if s >= 0:
                shifted[..., s:] = row[..., : width - s]
                dropped = row[..., width - s:]
            else:
                shifted[..., : width + s] = row[..., -s:]
                dropped = row[..., :-s]
            if dropped.size and dropped.any():
                loss += float(np.max(dropped.sum(axis=-1)) * base.mu[i])
            acc += W[i][:, None] * shifted[..., None, :]
        ring[lvl % depth] = acc
        out[lvl] = acc[..., idx]
    if max_loss is not None and loss > max_loss:
        raise MassLossError(f"fiber truncation lost {loss:.3e} > {max_loss:.1e}; enlarge L")
    return RenewalTable(out, phis, L, loss, base.q)
