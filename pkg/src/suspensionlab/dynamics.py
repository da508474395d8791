"""Fibered systems: piecewise-monotone interval maps and finite Markov shifts.

Points lying on a partition boundary are rejected with :class:`BoundaryError`.
Maps are defined mod null sets, so a silent tie-break would hide a
measure-zero event that the caller should know about.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

ENDPOINT_TOL = 1e-12


class BoundaryError(ValueError):
    """Raised when a point falls on a partition boundary."""

    def __init__(self, x: float, index: int | None = None):
        self.x = x
        self.index = index
        where = "" if index is None else f" at orbit index {index}"
        super().__init__(f"boundary point x={x!r}{where}")


class EmptyCylinderError(ValueError):
    """Raised for words that are not admissible."""


def _decimal(value) -> float:
    # decimal strings avoid locale-dependent float parsing
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


# ---------------------------------------------------------------------------
# partitions and branches


@dataclass(frozen=True)
class Partition:
    """Ordered open cells ``(lo, hi)`` covering an interval mod endpoints."""

    cells: tuple[tuple[float, float], ...]
    labels: tuple[Hashable, ...]

    def __post_init__(self):
        if len(self.cells) == 0:
            raise ValueError("partition needs at least one cell")
        if len(self.labels) != len(self.cells):
            raise ValueError("one label per cell required")
        for (lo, hi) in self.cells:
            if not hi > lo:
                raise ValueError(f"degenerate cell ({lo}, {hi})")
        for (a, b) in zip(self.cells, self.cells[1:]):
            if not b[0] > a[0]:
                raise ValueError("left endpoints must be strictly increasing")
            if abs(b[0] - a[1]) > ENDPOINT_TOL:
                raise ValueError("cells must be contiguous (full measure union)")

    @property
    def lo(self) -> float:
        return self.cells[0][0]

    @property
    def hi(self) -> float:
        return self.cells[-1][1]

    @property
    def edges(self) -> np.ndarray:
        return np.array([c[0] for c in self.cells] + [self.cells[-1][1]])

    def __len__(self) -> int:
        return len(self.cells)

    def locate(self, x: float) -> int:
        """Index of the cell containing ``x``; boundary points raise."""
        if not (self.lo < x < self.hi):
            raise BoundaryError(x)
        los = [c[0] for c in self.cells]
        i = bisect.bisect_right(los, x) - 1
        lo, hi = self.cells[i]
        if x == lo or x >= hi:
            raise BoundaryError(x)
        return i

    def locate_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        edges = self.edges
        idx = np.searchsorted(edges, x, side="right") - 1
        bad = (idx < 0) | (idx >= len(self.cells))
        clipped = np.clip(idx, 0, len(self.cells) - 1)
        bad |= x == edges[clipped]
        bad |= x >= edges[clipped + 1]
        if np.any(bad):
            raise BoundaryError(float(x[np.argmax(bad)]))
        return idx


@dataclass(frozen=True)
class AffineBranch:
    slope: float
    offset: float

    def __post_init__(self):
        if self.slope == 0:
            raise ValueError("affine branch must have nonzero slope")

    def __call__(self, x):
        return self.slope * x + self.offset

    def derivative(self, x):
        return self.slope + 0.0 * np.asarray(x, dtype=float)

    def inverse(self, y, cell=None):
        return (y - self.offset) / self.slope

    def curvature_ratio(self, cell) -> float:
        return 0.0

    def min_abs_derivative(self, cell) -> float:
        return abs(self.slope)

    @property
    def increasing(self) -> bool:
        return self.slope > 0


@dataclass(frozen=True)
class SmoothBranch:
    """A closed-form monotone branch with explicit first and second derivative.

    ``curvature_bound`` and ``expansion_bound`` may be supplied as metadata
    (sup |T''|/(T')^2 and inf |T'|); otherwise they are estimated by sampling.
    """

    f: Callable[[float], float]
    df: Callable[[float], float]
    d2f: Callable[[float], float]
    curvature_bound: float | None = None
    expansion_bound: float | None = None
    samples: int = 2049

    def __call__(self, x):
        return self.f(x)

    def derivative(self, x):
        return self.df(x)

    def _grid(self, cell):
        lo, hi = cell
        return np.linspace(lo, hi, self.samples)[1:-1]

    def inverse(self, y, cell):
        lo, hi = cell
        g = lambda x: self.f(x) - y  # noqa: E731
        a, b = g(lo), g(hi)
        if a == 0:
            return lo
        if b == 0:
            return hi
        if a * b > 0:
            raise ValueError(f"value {y} outside branch image")
        return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def curvature_ratio(self, cell) -> float:
        if self.curvature_bound is not None:
            return float(self.curvature_bound)
        xs = self._grid(cell)
        d1 = np.array([self.df(x) for x in xs])
        d2 = np.array([self.d2f(x) for x in xs])
        return float(np.max(np.abs(d2) / d1 ** 2))

    def min_abs_derivative(self, cell) -> float:
        if self.expansion_bound is not None:
            return float(self.expansion_bound)
        xs = np.concatenate([[cell[0]], self._grid(cell), [cell[1]]])
        return float(np.min(np.abs([self.df(x) for x in xs])))

    def increasing_on(self, cell) -> bool:
        return self.df(0.5 * (cell[0] + cell[1])) > 0


Branch = AffineBranch | SmoothBranch


# ---------------------------------------------------------------------------
# interval maps


@dataclass(frozen=True)
class Cylinder:
    word: tuple
    as_interval: tuple[float, float] | None = None

    @property
    def length(self) -> float:
        if self.as_interval is None:
            return float("nan")
        return self.as_interval[1] - self.as_interval[0]


@dataclass(frozen=True)
class IntervalMap:
    """Piecewise monotone map of an interval.

    ``symbols`` codes each cell by a symbol of the itinerary alphabet.  By
    default the symbol is the cell label; the Markov-shift constructor uses
    depth-2 cells coded by their first letter.
    """

    partition: Partition
    branches: tuple[Branch, ...]
    name: str = "interval-map"
    symbols: tuple[Hashable, ...] | None = None
    separation_base: float = 0.5
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if len(self.branches) != len(self.partition):
            raise ValueError("one branch per cell required")
        if self.symbols is None:
            object.__setattr__(self, "symbols", tuple(self.partition.labels))
        if len(self.symbols) != len(self.partition):
            raise ValueError("one symbol per cell required")
        if not (0 < self.separation_base < 1):
            raise ValueError("separation base must lie in (0, 1)")
        # symbol cells must be convex unions of consecutive cells
        seen = []
        for s in self.symbols:
            if seen and seen[-1] == s:
                continue
            if s in seen:
                raise ValueError(f"cells of symbol {s!r} are not consecutive")
            seen.append(s)
        for c, br in zip(self.partition.cells, self.branches):
            if isinstance(br, SmoothBranch) and br.min_abs_derivative(c) == 0:
                raise ValueError("smooth branch derivative vanishes on its cell")
        object.__setattr__(self, "_images", tuple(self._image(i) for i in range(len(self))))

    def __len__(self) -> int:
        return len(self.partition)

    def __hash__(self):
        return id(self)

    # -- basic geometry ----------------------------------------------------
    def _image(self, i: int) -> tuple[float, float]:
        lo, hi = self.partition.cells[i]
        a, b = float(self.branches[i](lo)), float(self.branches[i](hi))
        return (min(a, b), max(a, b))

    def image(self, i: int) -> tuple[float, float]:
        return self._images[i]

    @property
    def alphabet(self) -> tuple:
        out = []
        for s in self.symbols:
            if not out or out[-1] != s:
                out.append(s)
        return tuple(out)

    def symbol_interval(self, s) -> tuple[float, float]:
        idx = [i for i, t in enumerate(self.symbols) if t == s]
        if not idx:
            raise EmptyCylinderError(f"unknown symbol {s!r}")
        return (self.partition.cells[idx[0]][0], self.partition.cells[idx[-1]][1])

    def branch_increasing(self, i: int) -> bool:
        br = self.branches[i]
        if isinstance(br, AffineBranch):
            return br.increasing
        return br.increasing_on(self.partition.cells[i])

    def inverse_branch(self, i: int, interval: tuple[float, float]) -> tuple[float, float]:
        cell = self.partition.cells[i]
        a = float(self.branches[i].inverse(interval[0], cell))
        b = float(self.branches[i].inverse(interval[1], cell))
        return (min(a, b), max(a, b))

    @property
    def markov(self) -> bool:
        edges = self.partition.edges
        for lo, hi in self._images:
            for e in (lo, hi):
                if np.min(np.abs(edges - e)) > ENDPOINT_TOL:
                    return False
        return True

    @property
    def is_affine(self) -> bool:
        return all(isinstance(b, AffineBranch) for b in self.branches)

    @property
    def preserves_lebesgue(self) -> bool:
        """True when sum of 1/|T'| over preimages is 1 (affine full-image test)."""
        if not (self.is_affine and self.markov):
            return False
        edges = self.partition.edges
        total = np.zeros(len(self))
        for i, (lo, hi) in enumerate(self._images):
            for j in range(len(self)):
                c = self.partition.cells[j]
                if c[0] >= lo - ENDPOINT_TOL and c[1] <= hi + ENDPOINT_TOL:
                    total[j] += 1.0 / abs(self.branches[i].slope)
        del edges
        return bool(np.all(np.abs(total - 1.0) < 1e-9))

    @property
    def invariant_density(self) -> np.ndarray | None:
        """Per-cell invariant density for affine Markov maps, else ``None``."""
        if not (self.is_affine and self.markov):
            return None
        n = len(self)
        widths = np.array([hi - lo for lo, hi in self.partition.cells])
        # cell-level Ulam matrix is exact for affine Markov maps
        M = np.zeros((n, n))
        for i, (lo, hi) in enumerate(self._images):
            s = abs(self.branches[i].slope)
            for j, c in enumerate(self.partition.cells):
                if c[0] >= lo - ENDPOINT_TOL and c[1] <= hi + ENDPOINT_TOL:
                    M[i, j] = (c[1] - c[0]) / s / widths[i]
        w, v = np.linalg.eig(M.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        mass = np.real(v[:, k])
        mass = mass / mass.sum()
        return mass / widths

    # -- dynamics ------------------------------------------------------------
    def apply(self, x: float) -> float:
        i = self.partition.locate(x)
        return float(self.branches[i](x))

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.partition.locate_array(x)
        if self.is_affine:
            slopes = np.array([b.slope for b in self.branches])
            offs = np.array([b.offset for b in self.branches])
            return slopes[idx] * x + offs[idx]
        out = np.empty_like(x)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = [self.branches[i](v) for v in x[sel]]
        return out

    def symbol_of(self, x: float):
        return self.symbols[self.partition.locate(x)]

    def itinerary(self, x: float, n: int) -> tuple:
        out = []
        for k in range(n):
            try:
                i = self.partition.locate(x)
            except BoundaryError as exc:
                raise BoundaryError(x, k) from exc
            out.append(self.symbols[i])
            if k + 1 < n:
                x = float(self.branches[i](x))
        return tuple(out)


def apply_map(map: IntervalMap, x: float) -> float:
    """Return ``T(x)`` using the branch of the cell containing ``x``."""
    return map.apply(x)


def cylinder_interval(map: IntervalMap, word: Sequence) -> tuple[float, float]:
    """Closed hull of the set of points whose itinerary starts with ``word``."""
    word = tuple(word)
    if not word:
        return (map.partition.lo, map.partition.hi)
    J = map.symbol_interval(word[-1])
    for s in reversed(word[:-1]):
        found = None
        for i, t in enumerate(map.symbols):
            if t != s:
                continue
            lo, hi = map.image(i)
            a, b = max(lo, J[0]), min(hi, J[1])
            if b - a > ENDPOINT_TOL:
                if found is not None:
                    raise ValueError("word selects more than one branch; refine symbols")
                found = (i, (a, b))
        if found is None:
            raise EmptyCylinderError(f"word {word!r} is not admissible")
        i, piece = found
        J = map.inverse_branch(i, piece)
    return J


def cylinder(map: IntervalMap, word: Sequence) -> Cylinder:
    return Cylinder(tuple(word), cylinder_interval(map, word))


def admissible_words(map: IntervalMap, depth: int) -> list[tuple]:
    """All words of the given depth with nonempty cylinder, in interval order."""
    words = [(s,) for s in map.alphabet]
    for _ in range(depth - 1):
        nxt = []
        for w in words:
            for s in map.alphabet:
                try:
                    cylinder_interval(map, w + (s,))
                except EmptyCylinderError:
                    continue
                nxt.append(w + (s,))
        words = nxt
    words.sort(key=lambda w: cylinder_interval(map, w)[0])
    return words


def word_measure(map: IntervalMap, word: Sequence) -> float:
    """Invariant measure of a cylinder (Lebesgue if the map preserves it)."""
    lo, hi = cylinder_interval(map, word)
    if map.preserves_lebesgue:
        return hi - lo
    h = map.invariant_density
    if h is None:
        raise ValueError("no exact invariant density for this map")
    total = 0.0
    for (a, b), d in zip(map.partition.cells, h):
        total += d * max(0.0, min(b, hi) - max(a, lo))
    return total


# ---------------------------------------------------------------------------
# Markov shifts


@dataclass(frozen=True)
class MarkovShift:
    symbols: tuple
    adjacency: np.ndarray
    initial: np.ndarray
    transition: np.ndarray
    separation_base: float = 0.5
    mixing: bool = True
    name: str = "markov-shift"

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=bool)
        P = np.asarray(self.transition, dtype=float)
        pi = np.asarray(self.initial, dtype=float)
        n = len(self.symbols)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial", pi)
        if A.shape != (n, n) or P.shape != (n, n) or pi.shape != (n,):
            raise ValueError("shape mismatch between symbols, adjacency and transition")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("transition matrix must be row-stochastic")
        if np.any((P > 0) & ~A):
            raise ValueError("transition matrix not compatible with adjacency")
        if np.any(A & (P == 0)):
            raise ValueError("admissible transition with zero probability")
        if abs(pi.sum() - 1) > 1e-12 or np.any(pi <= 0):
            raise ValueError("initial vector must be a positive probability vector")
        if not (0 < self.separation_base < 1):
            raise ValueError("separation base must lie in (0, 1)")
        if self.mixing and not self.primitive:
            raise ValueError("mixing flag set but adjacency is not primitive")

    @property
    def stationary(self) -> bool:
        return bool(np.max(np.abs(self.initial @ self.transition - self.initial)) < 1e-12)

    @property
    def primitive(self) -> bool:
        n = len(self.symbols)
        A = self.adjacency.astype(np.int64)
        B = np.eye(n, dtype=np.int64)
        for _ in range((n - 1) ** 2 + 1):
            B = np.minimum(B @ A, 1)
        return bool(np.all(B > 0))

    def index(self, s) -> int:
        return self.symbols.index(s)

    def cylinder_measure(self, word: Sequence) -> float:
        word = list(word)
        if not word:
            return 1.0
        idx = [self.index(s) for s in word]
        m = self.initial[idx[0]]
        for a, b in zip(idx, idx[1:]):
            m *= self.transition[a, b]
        return float(m)

    def admissible(self, word: Sequence) -> bool:
        idx = [self.index(s) for s in word]
        return all(self.adjacency[a, b] for a, b in zip(idx, idx[1:]))

    def words(self, depth: int) -> Iterable[tuple]:
        for w in itertools.product(self.symbols, repeat=depth):
            if self.admissible(w):
                yield w

    @classmethod
    def bernoulli(cls, probs: Sequence[float], symbols: Sequence | None = None, **kw) -> "MarkovShift":
        p = np.asarray(probs, dtype=float)
        n = len(p)
        syms = tuple(symbols) if symbols is not None else tuple(range(1, n + 1))
        return cls(syms, np.ones((n, n), bool), p, np.tile(p, (n, 1)), **kw)

    @classmethod
    def parry(cls, adjacency, symbols: Sequence | None = None, **kw) -> "MarkovShift":
        """Maximal-entropy Markov measure of a primitive 0-1 matrix."""
        A = np.asarray(adjacency, dtype=float)
        w, vr = np.linalg.eig(A)
        k = int(np.argmax(w.real))
        lam = w[k].real
        r = np.abs(vr[:, k].real)
        wl, vl = np.linalg.eig(A.T)
        l = np.abs(vl[:, int(np.argmax(wl.real))].real)
        P = A * r[None, :] / (lam * r[:, None])
        P = P / P.sum(axis=1, keepdims=True)
        pi = l * r
        pi = pi / pi.sum()
        syms = tuple(symbols) if symbols is not None else tuple(range(1, len(A) + 1))
        return cls(syms, A > 0, pi, P, **kw)


def build_interval_map_from_markov(shift: MarkovShift, name: str | None = None) -> IntervalMap:
    """Realize a stationary Markov shift as a Lebesgue-preserving Markov map.

    Symbols are reordered by nonincreasing measure (stable for ties); the
    order used is stored in ``meta["symbol_order"]``.  Level-1 intervals have
    length ``m([s])``; each depth-2 interval ``B_{kl}`` is mapped affinely and
    increasingly onto ``B_l``, which gives ``|B_w| = m([w])`` at every depth.
    """
    if not shift.stationary:
        raise ValueError("initial vector is not stationary for the transition matrix")
    pi, P = shift.initial, shift.transition
    order = sorted(range(len(shift.symbols)), key=lambda i: -pi[i])
    left = {}
    pos = 0.0
    for i in order:
        left[i] = pos
        pos += pi[i]
    cells, branches, syms, labels = [], [], [], []
    for k in order:
        lo = left[k]
        for l in order:
            if not shift.adjacency[k, l]:
                continue
            width = pi[k] * P[k, l]
            slope = pi[l] / width
            cells.append((lo, lo + width))
            branches.append(AffineBranch(slope, left[l] - slope * lo))
            syms.append(shift.symbols[k])
            labels.append((shift.symbols[k], shift.symbols[l]))
            lo += width
    # snap accumulated rounding so the last edge is exactly 1
    cells[-1] = (cells[-1][0], 1.0)
    fixed = [cells[0]]
    for c in cells[1:]:
        fixed.append((fixed[-1][1], c[1]))
    part = Partition(tuple(fixed), tuple(labels))
    return IntervalMap(
        part,
        tuple(branches),
        name=name or f"{shift.name}-interval",
        symbols=tuple(syms),
        separation_base=shift.separation_base,
        meta={"symbol_order": tuple(shift.symbols[i] for i in order), "source": shift.name},
    )


def cylinder_measure_error(imap: IntervalMap, shift: MarkovShift, depth: int) -> float:
    """max over admissible words up to ``depth`` of ||B_w| - m([w])|."""
    err = 0.0
    for d in range(1, depth + 1):
        for w in shift.words(d):
            lo, hi = cylinder_interval(imap, w)
            err = max(err, abs((hi - lo) - shift.cylinder_measure(w)))
    return err


# ---------------------------------------------------------------------------
# cell-wise functions and regularity


@dataclass(frozen=True)
class CellFunction:
    """A function constant on depth-``depth`` cylinders of an interval map.

    Values may be scalars or vectors (for R^kappa-valued displacements).
    """

    map: IntervalMap
    depth: int
    table: Mapping[tuple, object]
    name: str = "f"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        tab = {}
        for w, v in self.table.items():
            w = (w,) if not isinstance(w, tuple) else w
            if len(w) != self.depth:
                raise ValueError(f"word {w!r} has wrong depth")
            tab[w] = np.atleast_1d(np.asarray(v, dtype=float))
        dims = {v.shape for v in tab.values()}
        if len(dims) != 1:
            raise ValueError("inconsistent value dimensions")
        for w in admissible_words(self.map, self.depth):
            if w not in tab:
                raise ValueError(f"missing value for admissible word {w!r}")
        object.__setattr__(self, "table", tab)

    def __hash__(self):
        return id(self)

    @classmethod
    def from_symbols(cls, map: IntervalMap, values: Mapping, name: str = "f") -> "CellFunction":
        return cls(map, 1, {(s,): v for s, v in values.items()}, name=name)

    @property
    def dim(self) -> int:
        return next(iter(self.table.values())).shape[0]

    def value(self, word: Sequence) -> np.ndarray:
        return self.table[tuple(word[: self.depth])]

    def __call__(self, x: float) -> np.ndarray:
        return self.value(self.map.itinerary(x, self.depth))

    def values(self) -> np.ndarray:
        return np.array(list(self.table.values()))

    @property
    def inf(self) -> float:
        return float(np.min(self.values()))

    @property
    def sup(self) -> float:
        return float(np.max(self.values()))

    def mean(self) -> np.ndarray:
        total = 0.0
        for w, v in self.table.items():
            try:
                total = total + word_measure(self.map, w) * v
            except EmptyCylinderError:
                continue
        return np.asarray(total)


@dataclass(frozen=True)
class RegularityReport:
    holder_constant: float
    lipschitz_constant: float
    afu_ok: bool
    gm_ok: bool
    diagnostics: Mapping

    def as_dict(self) -> dict:
        return {
            "holder_constant": self.holder_constant,
            "lipschitz_constant": self.lipschitz_constant,
            "afu_ok": self.afu_ok,
            "gm_ok": self.gm_ok,
            "diagnostics": dict(self.diagnostics),
        }


def _holder_cellwise(phi: CellFunction, theta: float) -> float:
    # D_{a,theta}: pairs in a common symbol cell, first disagreement at j
    best = 0.0
    words = list(phi.table)
    for u, v in itertools.combinations(words, 2):
        if u[0] != v[0]:
            continue
        j = next(k for k in range(len(u)) if u[k] != v[k]) + 1
        d = float(np.max(np.abs(phi.table[u] - phi.table[v])))
        best = max(best, d / theta ** j)
    return best


def validate_regularity(map: IntervalMap, phi: CellFunction | Callable | None = None) -> RegularityReport:
    """Check (A)(F)(U) from branch data, the Gibbs-Markov conditions, and phi's constants.

    Constants are exact for cell-wise-constant ``phi``. For a callable they
    are sampled upper estimates on a grid inside each cell.
    """
    cells = map.partition.cells
    curv = max(br.curvature_ratio(c) for br, c in zip(map.branches, cells))
    expansion = min(br.min_abs_derivative(c) for br, c in zip(map.branches, cells))
    images = []
    for i in range(len(map)):
        im = map.image(i)
        if not any(abs(im[0] - a) < ENDPOINT_TOL and abs(im[1] - b) < ENDPOINT_TOL for a, b in images):
            images.append(im)
    cond_A = math.isfinite(curv)
    cond_F = True  # finite partitions have finitely many images
    cond_U = expansion > 1.0
    markov = map.markov
    inf_image = min(b - a for a, b in images)
    distortion = 0.0 if map.is_affine else curv * max(hi - lo for lo, hi in cells)
    gm_ok = markov and inf_image > 0 and math.isfinite(distortion)

    theta = map.separation_base
    if phi is None:
        holder = lip = 0.0
        note = "no displacement supplied"
    elif isinstance(phi, CellFunction):
        holder = _holder_cellwise(phi, theta)
        # constant on depth-1 symbol cells means constant on each branch cell
        lip = 0.0 if phi.depth == 1 or holder == 0.0 else math.inf
        note = "exact (cell-wise constant)"
    else:
        holder = lip = 0.0
        for (lo, hi) in cells:
            xs = np.linspace(lo, hi, 513)[1:-1]
            ys = np.array([np.max(np.abs(np.atleast_1d(phi(x)))) for x in xs])
            lip = max(lip, float(np.max(np.abs(np.diff(ys)) / np.diff(xs))))
            holder = max(holder, float(np.max(ys) - np.min(ys)) / theta)
        note = "sampled upper estimate"
    diag = {
        "A_curvature_ratio": curv,
        "F_distinct_images": len(images),
        "U_inf_derivative": expansion,
        "A": cond_A,
        "F": cond_F,
        "U": cond_U,
        "markov": markov,
        "b_inf_image_measure": inf_image,
        "g_distortion": distortion,
        "theta": theta,
        "phi_constants": note,
    }
    return RegularityReport(holder, lip, bool(cond_A and cond_F and cond_U), bool(gm_ok), diag)


# ---------------------------------------------------------------------------
# small catalog of maps and JSON loading


def doubling_map() -> IntervalMap:
    part = Partition(((0.0, 0.5), (0.5, 1.0)), (0, 1))
    return IntervalMap(part, (AffineBranch(2.0, 0.0), AffineBranch(2.0, -1.0)), name="doubling")


def full_branch_map(k: int, name: str | None = None) -> IntervalMap:
    """x -> k x mod 1 with symbols 0..k-1."""
    cells = tuple((i / k, (i + 1) / k) for i in range(k))
    cells = cells[:-1] + ((cells[-1][0], 1.0),)
    part = Partition(cells, tuple(range(k)))
    branches = tuple(AffineBranch(float(k), float(-i)) for i in range(k))
    return IntervalMap(part, branches, name=name or f"{k}-branch")


def identity_map(ncells: int = 1) -> IntervalMap:
    cells = tuple((i / ncells, (i + 1) / ncells) for i in range(ncells))
    part = Partition(cells, tuple(range(ncells)))
    return IntervalMap(part, tuple(AffineBranch(1.0, 0.0) for _ in cells), name="identity")


def map_from_config(cfg: Mapping | str | Path) -> IntervalMap:
    """Load a map from a JSON config with decimal-string numerics.

    Two forms are accepted::

        {"type": "interval", "cells": [["0", "0.5"], ...],
         "branches": [{"slope": "2", "offset": "0"}, ...], "symbols": [...]}
        {"type": "markov_shift", "symbols": [...], "adjacency": [[1, 1], ...],
         "transition": [["0.5", "0.5"], ...], "initial": [...]}
    """
    if isinstance(cfg, (str, Path)):
        cfg = json.loads(Path(cfg).read_text(encoding="utf-8"))
    kind = cfg.get("type", "interval")
    name = cfg.get("name", kind)
    theta = _decimal(cfg.get("separation_base", "0.5"))
    if kind == "interval":
        cells = tuple((_decimal(a), _decimal(b)) for a, b in cfg["cells"])
        labels = tuple(cfg.get("labels", range(len(cells))))
        branches = tuple(AffineBranch(_decimal(b["slope"]), _decimal(b["offset"])) for b in cfg["branches"])
        symbols = tuple(cfg["symbols"]) if "symbols" in cfg else None
        return IntervalMap(Partition(cells, labels), branches, name=name, symbols=symbols, separation_base=theta)
    if kind == "markov_shift":
        shift = markov_shift_from_config(cfg)
        return build_interval_map_from_markov(shift, name=name)
    raise ValueError(f"unknown map type {kind!r}")


def markov_shift_from_config(cfg: Mapping) -> MarkovShift:
    symbols = tuple(cfg["symbols"])
    A = np.array(cfg["adjacency"], dtype=bool)
    if "transition" in cfg:
        P = np.array([[_decimal(v) for v in row] for row in cfg["transition"]])
        if "initial" in cfg:
            pi = np.array([_decimal(v) for v in cfg["initial"]])
        else:
            w, v = np.linalg.eig(P.T)
            pi = np.abs(np.real(v[:, int(np.argmin(np.abs(w - 1)))]))
            pi = pi / pi.sum()
        return MarkovShift(symbols, A, pi, P, separation_base=_decimal(cfg.get("separation_base", "0.5")),
                           mixing=bool(cfg.get("mixing", True)), name=cfg.get("name", "markov-shift"))
    return MarkovShift.parry(A, symbols, name=cfg.get("name", "markov-shift"))
