"""Built-in cocycle systems."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .cocycle import CocycleSystem, GroupSpec
from .dynamics import (
    AffineBranch,
    IntervalMap,
    MarkovShift,
    Partition,
    admissible_words,
    build_interval_map_from_markov,
    doubling_map,
    full_branch_map,
)

ZCOVER_ADJACENCY = np.array([[1, 1, 1, 0], [1, 1, 1, 1], [1, 1, 1, 1], [0, 1, 1, 1]])
HEAVY_TAIL_P = 1.5
HEAVY_TAIL_K = 16


def bernoulli_map(probs, symbols, name: str = "bernoulli") -> IntervalMap:
    """Full-branch Lebesgue-preserving map with cells of length probs[k]."""
    p = np.asarray(probs, dtype=float)
    order = sorted(range(len(p)), key=lambda i: -p[i])
    edges = np.concatenate([[0.0], np.cumsum(p[order])])
    edges[-1] = 1.0
    cells = tuple(zip(edges[:-1], edges[1:]))
    branches = [AffineBranch(1.0 / (hi - lo), -lo / (hi - lo)) for lo, hi in cells]
    labels = [symbols[i] for i in order]
    return IntervalMap(Partition(tuple(cells), tuple(labels)), tuple(branches), name=name)


def _const(map_, value):
    return {(s,): value for s in map_.alphabet}


def doubling_pm_half() -> CocycleSystem:
    T = doubling_map()
    return CocycleSystem.build(T, _const(T, 1.0), {(0,): -0.5, (1,): 0.5}, GroupSpec(1, False),
                               name="doubling-pm-half")


def doubling_digit() -> CocycleSystem:
    T = doubling_map()
    return CocycleSystem.build(T, _const(T, 1.0), {(0,): 0, (1,): 1}, GroupSpec(1, True), name="doubling-digit")


def doubling_roof_line() -> CocycleSystem:
    T = doubling_map()
    return CocycleSystem.build(T, {(0,): 1.0, (1,): 2.0}, {(0,): 0, (1,): 1}, GroupSpec(1, True),
                               name="doubling-roof-line")


def golden_mean_parry() -> CocycleSystem:
    shift = MarkovShift.parry([[1, 1], [1, 0]], symbols=(1, 2), name="golden-mean")
    T = build_interval_map_from_markov(shift, name="golden-mean-parry")
    return CocycleSystem.build(T, _const(T, 1.0), {(1,): 0, (2,): 1}, GroupSpec(1, True),
                               name="golden-mean-parry")


def quad_kappa2() -> CocycleSystem:
    T = full_branch_map(4, name="quad")
    phi = {(0,): (-0.5, -0.5), (1,): (-0.5, 0.5), (2,): (0.5, -0.5), (3,): (0.5, 0.5)}
    return CocycleSystem.build(T, _const(T, 1.0), phi, GroupSpec(2, False), name="quad-kappa2")


QUAD_PHI = {(0,): -1, (1,): 0, (2,): 0, (3,): 1}


def roof_const() -> CocycleSystem:
    """Z-cover of the 4-branch map by a centered aperiodic digit, unit roof."""
    T = full_branch_map(4, name="quad")
    return CocycleSystem.build(T, _const(T, 1.0), QUAD_PHI, GroupSpec(1, True), name="roof-const")


def roof_two_level() -> CocycleSystem:
    T = full_branch_map(4, name="quad")
    roof = {(0,): 1.0, (1,): 2.0, (2,): 1.0, (3,): 1.0}
    return CocycleSystem.build(T, roof, QUAD_PHI, GroupSpec(1, True), name="roof-two-level")


def quad_lag() -> CocycleSystem:
    """phi reads the current digit, the roof reads the next one."""
    T = full_branch_map(4, name="quad")
    words = admissible_words(T, 2)
    g = [-1, 0, 0, 1]
    phi = {w: g[w[0]] for w in words}
    roof = {w: 1.0 + (w[1] >= 2) for w in words}
    return CocycleSystem.build(T, roof, phi, GroupSpec(1, True), depth=2, name="quad-lag")


def zcover_sft() -> CocycleSystem:
    shift = MarkovShift.parry(ZCOVER_ADJACENCY, symbols=(1, 2, 3, 4), name="zcover-sft")
    T = build_interval_map_from_markov(shift, name="zcover-sft")
    phi = {(1,): -1, (2,): 0, (3,): 0, (4,): 1}
    roof = {(1,): 1.0, (2,): 1.0, (3,): 2.0, (4,): 1.0}
    return CocycleSystem.build(T, roof, phi, GroupSpec(1, True), name="zcover-sft")


def heavy_tail_weights(p: float = HEAVY_TAIL_P, K: int = HEAVY_TAIL_K) -> tuple[list[int], np.ndarray]:
    ks = list(range(1, K + 1))
    w = np.array([k ** -(1 + p) for k in ks])
    vals = [-k for k in reversed(ks)] + ks
    probs = np.concatenate([w[::-1], w])
    return vals, probs / probs.sum()


def heavy_tail_nns() -> CocycleSystem:
    vals, probs = heavy_tail_weights()
    T = bernoulli_map(probs, vals, name="heavy-tail")
    return CocycleSystem.build(T, _const(T, 1.0), {(v,): v for v in vals}, GroupSpec(1, True),
                               name="heavy-tail-nns")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable[[], CocycleSystem]
    description: str


CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in [
        CatalogEntry("doubling-pm-half", doubling_pm_half, "doubling map, phi = +-1/2 per half, r = 1, group R"),
        CatalogEntry("doubling-digit", doubling_digit, "doubling map, phi = binary digit, r = 1, group Z"),
        CatalogEntry("doubling-roof-line", doubling_roof_line, "doubling map, phi = digit, r = 1 + digit"),
        CatalogEntry("golden-mean-parry", golden_mean_parry, "golden-mean SFT with Parry measure, phi = [s = 2]"),
        CatalogEntry("quad-kappa2", quad_kappa2, "4-branch map, independent +-1/2 pair, group R^2"),
        CatalogEntry("heavy-tail-nns", heavy_tail_nns,
                     f"Bernoulli shift, P(phi = +-k) ~ k^-{1 + HEAVY_TAIL_P}, |k| <= {HEAVY_TAIL_K}"),
        CatalogEntry("roof-const", roof_const, "4-branch map, phi = (-1, 0, 0, 1), r = 1"),
        CatalogEntry("roof-two-level", roof_two_level, "4-branch map, phi = (-1, 0, 0, 1), r = (1, 2, 1, 1)"),
        CatalogEntry("quad-lag", quad_lag, "4-branch map, phi on digit 0, r = 1 + [digit 1 >= 2]"),
        CatalogEntry("zcover-sft", zcover_sft, "Z-cover of a 4-symbol mixing SFT, r = (1, 1, 2, 1)"),
    ]
}


@lru_cache(maxsize=None)
def get_system(name: str) -> CocycleSystem:
    try:
        return CATALOG[name].builder()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {sorted(CATALOG)}") from None


def list_systems() -> list[dict]:
    out = []
    for name, entry in CATALOG.items():
        sys = get_system(name)
        rep = sys.regularity
        out.append({
            "name": name,
            "description": entry.description,
            "kappa": sys.group.kappa,
            "lattice": sys.group.lattice,
            "mean_roof": sys.roof.mean,
            "afu_ok": rep.afu_ok,
            "gm_ok": rep.gm_ok,
            "holder_constant": rep.holder_constant,
            "lipschitz_constant": rep.lipschitz_constant,
        })
    return out
