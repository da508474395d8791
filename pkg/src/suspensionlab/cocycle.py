"""Suspended semiflows, renewal and jump cocycles, skew products."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from .dynamics import (
    BoundaryError,
    CellFunction,
    IntervalMap,
    MarkovShift,
    RegularityReport,
    build_interval_map_from_markov,
    validate_regularity,
)


@dataclass(frozen=True)
class GroupSpec:
    kappa: int = 1
    lattice: bool = True

    def __post_init__(self):
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")

    @property
    def haar_unit(self) -> str:
        return "counting" if self.lattice else "lebesgue"

    def zero(self) -> np.ndarray:
        return np.zeros(self.kappa)

    def contains(self, z) -> bool:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.kappa,):
            return False
        return bool(not self.lattice or np.all(z == np.round(z)))


@dataclass(frozen=True)
class Roof:
    r: CellFunction

    def __post_init__(self):
        if self.r.dim != 1:
            raise ValueError("roof must be scalar")
        if not self.r.inf > 0:
            raise ValueError("roof must be bounded away from zero")

    @property
    def inf_r(self) -> float:
        return self.r.inf

    @property
    def sup_r(self) -> float:
        return self.r.sup

    @property
    def mean(self) -> float:
        return float(self.r.mean()[0])

    @property
    def intensity(self) -> float:
        return 1.0 / self.mean

    def __call__(self, x: float) -> float:
        return float(self.r(x)[0])


@dataclass(frozen=True)
class SuspensionPoint:
    x: float
    y: float

    def check(self, roof: Roof) -> "SuspensionPoint":
        if not (0.0 <= self.y < roof(self.x)):
            raise ValueError(f"height {self.y} outside [0, r(x))")
        return self


@dataclass(frozen=True)
class SkewPoint:
    base: SuspensionPoint
    z: tuple

    @staticmethod
    def of(x: float, y: float, z) -> "SkewPoint":
        return SkewPoint(SuspensionPoint(x, y), tuple(np.atleast_1d(np.asarray(z, dtype=float)).tolist()))


@dataclass(frozen=True)
class CocycleSystem:
    """Base map, roof and displacement with the fiber group."""

    map: IntervalMap
    roof: Roof
    phi: CellFunction
    group: GroupSpec
    name: str = "system"
    regularity: RegularityReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.phi.map is not self.map or self.roof.r.map is not self.map:
            raise ValueError("roof and displacement must live on the system's map")
        if self.phi.dim != self.group.kappa:
            raise ValueError("displacement dimension differs from kappa")
        if self.group.lattice and not np.all(self.phi.values() == np.round(self.phi.values())):
            raise ValueError("lattice displacement must take integer values")
        rep = validate_regularity(self.map, self.phi)
        if not math.isfinite(rep.holder_constant) or not (rep.afu_ok or rep.gm_ok):
            raise ValueError(f"regularity check failed: {rep.diagnostics}")
        object.__setattr__(self, "regularity", rep)

    def __hash__(self):
        return id(self)

    @classmethod
    def build(cls, base: IntervalMap | MarkovShift, roof: Mapping, phi: Mapping, group: GroupSpec | None = None,
              depth: int = 1, name: str = "system") -> "CocycleSystem":
        """Construct from symbol-word tables (``roof`` and ``phi`` keyed by words)."""
        imap = build_interval_map_from_markov(base) if isinstance(base, MarkovShift) else base
        rfun = CellFunction(imap, depth, roof, name="r")
        pfun = CellFunction(imap, depth, phi, name="phi")
        group = group or GroupSpec(pfun.dim, True)
        return cls(imap, Roof(rfun), pfun, group, name=name)

    @property
    def intensity(self) -> float:
        return self.roof.intensity

    @property
    def depth(self) -> int:
        return max(self.roof.r.depth, self.phi.depth)

    @property
    def total_mass(self) -> float:
        """nu(Y) = integral of r, the un-normalized suspension measure."""
        return self.roof.mean


# ---------------------------------------------------------------------------
# base-level sums


def birkhoff_sum(sys_or_map, f: CellFunction | Callable, x: float, n: int):
    """f_n(x) = sum_{k<n} f(T^k x)."""
    imap = sys_or_map.map if isinstance(sys_or_map, CocycleSystem) else sys_or_map
    total = 0.0
    for k in range(n):
        try:
            total = total + np.asarray(f(x))
            if k + 1 < n:
                x = imap.apply(x)
        except BoundaryError as exc:
            raise BoundaryError(exc.x, k) from exc
    if np.ndim(total) and np.size(total) == 1:
        return float(np.asarray(total).ravel()[0])
    return total


def _walk(sys: CocycleSystem, p: SuspensionPoint, t: float):
    """Return (n, x_n, r_n, phi_n) for the renewal window containing y + t."""
    if t < 0:
        raise ValueError("semiflow time must be nonnegative")
    target = p.y + t
    x = p.x
    r_n = 0.0
    phi_n = np.zeros(sys.group.kappa)
    n = 0
    limit = int(t / sys.roof.inf_r) + 2
    while True:
        try:
            r_x = sys.roof(x)
            if r_n + r_x > target:
                return n, x, r_n, phi_n
            phi_n = phi_n + sys.phi(x)
            x = sys.map.apply(x)
        except BoundaryError as exc:
            raise BoundaryError(exc.x, n) from exc
        r_n += r_x
        n += 1
        if n > limit:
            raise RuntimeError("renewal search exceeded t/inf_r + 1 steps")


def renewal_count(sys: CocycleSystem, p: SuspensionPoint, t: float) -> int:
    """The unique n with r_n(x) <= y + t < r_{n+1}(x)."""
    return _walk(sys, p, t)[0]


def flow(sys: CocycleSystem, p: SuspensionPoint, t: float) -> SuspensionPoint:
    n, x, r_n, _ = _walk(sys, p, t)
    return SuspensionPoint(x, p.y + t - r_n)


def jump_cocycle(sys: CocycleSystem, p: SuspensionPoint, t: float):
    phi = _walk(sys, p, t)[3]
    return float(phi[0]) if sys.group.kappa == 1 else phi


def flow_array(sys: CocycleSystem, x: np.ndarray, y: np.ndarray, t: float):
    """Vectorized flow; returns (x_t, y_t, N, J) arrays."""
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    n = np.zeros(x.shape, dtype=np.int64)
    J = np.zeros(x.shape + (sys.group.kappa,))
    rem = y + t
    active = np.ones(x.shape, dtype=bool)
    for _ in range(int(t / sys.roof.inf_r) + 2):
        if not active.any():
            break
        xa = x[active]
        words = _words_array(sys.map, xa, sys.depth)
        r = np.array([sys.roof.r.value(w)[0] for w in words])
        go = r <= rem[active]
        idx = np.flatnonzero(active)
        step = idx[go]
        if step.size:
            J[step] += np.array([sys.phi.value(w) for w, g in zip(words, go) if g])
            rem[step] -= r[go]
            x[step] = sys.map.apply_array(x[step])
            n[step] += 1
        active[idx[~go]] = False
    return x, rem, n, (J[..., 0] if sys.group.kappa == 1 else J)


def _words_array(imap: IntervalMap, x: np.ndarray, depth: int) -> list[tuple]:
    syms = []
    cur = np.asarray(x, dtype=float)
    for k in range(depth):
        idx = imap.partition.locate_array(cur)
        syms.append([imap.symbols[i] for i in idx])
        if k + 1 < depth:
            cur = imap.apply_array(cur)
    return list(zip(*syms))


# ---------------------------------------------------------------------------
# smooth cocycles


@dataclass(frozen=True)
class SmoothCocycleResult:
    value: float
    coboundary_start: float
    coboundary_end: float
    jump: float
    identity_error: float


def _fiber_integral(f: Callable, x: float, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    val, _ = integrate.quad(lambda s: f(x, s), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def smooth_cocycle(sys: CocycleSystem, p: SuspensionPoint, t: float, f: Callable[[float, float], float]):
    """F(t, p) = int_0^t f(Phi_s p) ds, with the coboundary E(p) = int_0^y f(x, s) ds.

    The identity F = J(phi) - E + E o Phi_t with phi(x) = int_0^{r(x)} f(x, s) ds
    is evaluated independently and its error returned.
    """
    n, x_end, r_n, _ = _walk(sys, p, t)
    y_end = p.y + t - r_n
    # piecewise: first partial fiber, n - 1 full fibers, last partial fiber
    if n == 0:
        F = _fiber_integral(f, p.x, p.y, p.y + t)
    else:
        xs = [p.x]
        for _ in range(n):
            xs.append(sys.map.apply(xs[-1]))
        F = _fiber_integral(f, xs[0], p.y, sys.roof(xs[0]))
        for xk in xs[1:n]:
            F += _fiber_integral(f, xk, 0.0, sys.roof(xk))
        F += _fiber_integral(f, xs[n], 0.0, y_end)
    E0 = _fiber_integral(f, p.x, 0.0, p.y)
    E1 = _fiber_integral(f, x_end, 0.0, y_end)
    jump = 0.0
    x = p.x
    for _ in range(n):
        jump += _fiber_integral(f, x, 0.0, sys.roof(x))
        x = sys.map.apply(x)
    return SmoothCocycleResult(F, E0, E1, jump, abs(F - (jump - E0 + E1)))


# ---------------------------------------------------------------------------
# skew products


def skew_flow(sys: CocycleSystem, q: SkewPoint, t: float) -> SkewPoint:
    n, x, r_n, phi_n = _walk(sys, q.base, t)
    z = tuple((np.asarray(q.z) + phi_n).tolist())
    return SkewPoint(SuspensionPoint(x, q.base.y + t - r_n), z)


def deck(q: SkewPoint, h) -> SkewPoint:
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return SkewPoint(q.base, tuple((np.asarray(q.z) + h).tolist()))


# ---------------------------------------------------------------------------
# sampling from nu


@dataclass
class NuSample:
    x: np.ndarray
    y: np.ndarray
    normalized: bool
    total_mass: float


def sample_nu(sys: CocycleSystem, size: int, rng: np.random.Generator, burn_in: int = 200) -> NuSample:
    """Sample points from nu restricted to Y by rejection on r(x) / sup r.

    The returned points follow the normalized law nu / nu(Y); ``total_mass``
    is nu(Y) so un-normalized quantities are recoverable.
    """
    imap = sys.map
    xs, ys = [], []
    need = size
    sup_r = sys.roof.sup_r
    while need > 0:
        batch = max(2 * need, 1024)
        if imap.preserves_lebesgue:
            lo, hi = imap.partition.lo, imap.partition.hi
            x = lo + (hi - lo) * rng.random(batch)
        else:
            x = rng.random(batch)
            for _ in range(burn_in):
                x = imap.apply_array(x)
        words = _words_array(imap, x, sys.roof.r.depth)
        r = np.array([sys.roof.r.value(w)[0] for w in words])
        keep = rng.random(batch) < r / sup_r
        x, r = x[keep][:need], r[keep][:need]
        xs.append(x)
        ys.append(rng.random(x.size) * r)
        need -= x.size
    return NuSample(np.concatenate(xs), np.concatenate(ys), True, sys.total_mass)


def write_trajectory_csv(path: str | Path, sys: CocycleSystem, q: SkewPoint | SuspensionPoint,
                         times: Sequence[float]) -> Path:
    path = Path(path)
    if isinstance(q, SuspensionPoint):
        q = SkewPoint(q, tuple(np.zeros(sys.group.kappa).tolist()))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y"] + [f"z{i}" for i in range(sys.group.kappa)])
        for t in times:
            out = skew_flow(sys, q, float(t))
            w.writerow([repr(float(t)), repr(out.base.x), repr(out.base.y)] + [repr(v) for v in out.z])
    return path
