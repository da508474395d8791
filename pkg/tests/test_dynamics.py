import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suspensionlab.dynamics import (
    AffineBranch,
    BoundaryError,
    CellFunction,
    EmptyCylinderError,
    IntervalMap,
    MarkovShift,
    Partition,
    admissible_words,
    apply_map,
    build_interval_map_from_markov,
    cylinder_interval,
    doubling_map,
    full_branch_map,
    cylinder_measure_error,
    map_from_config,
    validate_regularity,
    word_measure,
)
from suspensionlab.systems import ZCOVER_ADJACENCY


def golden_shift():
    return MarkovShift.parry([[1, 1], [1, 0]], symbols=(1, 2), name="golden-mean")


def zcover_shift():
    return MarkovShift.parry(ZCOVER_ADJACENCY, symbols=(1, 2, 3, 4))


# --- apply_map


@pytest.mark.parametrize("x, fx", [(0.3, 0.6), (0.75, 0.5)])
def test_doubling_values(x, fx):
    assert apply_map(doubling_map(), x) == pytest.approx(fx, abs=1e-15)


def test_tripling_half():
    assert apply_map(full_branch_map(3), 0.5) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("x", [0.5, 0.0, 1.0])
def test_boundary_point_is_an_error(x):
    with pytest.raises(BoundaryError):
        apply_map(doubling_map(), x)


def test_apply_array_matches_scalar():
    T = full_branch_map(4)
    xs = np.array([0.1, 0.3, 0.6, 0.9])
    assert np.allclose(T.apply_array(xs), [T.apply(x) for x in xs])


# --- cylinders


def test_cylinder_examples():
    T = doubling_map()
    assert cylinder_interval(T, (0, 1)) == pytest.approx((0.25, 0.5))
    assert cylinder_interval(T, (1,)) == pytest.approx((0.5, 1.0))


def test_forbidden_word_is_empty():
    T = build_interval_map_from_markov(golden_shift())
    with pytest.raises(EmptyCylinderError):
        cylinder_interval(T, (2, 2))


@pytest.mark.parametrize("maker", [doubling_map, lambda: full_branch_map(4),
                                   lambda: build_interval_map_from_markov(golden_shift()),
                                   lambda: build_interval_map_from_markov(zcover_shift())])
def test_branch_inverses_compose(maker):
    """T maps the cylinder of w onto the cylinder of tail(w)."""
    T = maker()
    for d in range(2, 7):
        for w in admissible_words(T, d):
            lo, hi = cylinder_interval(T, w)
            c = T.partition.locate(0.5 * (lo + hi))
            br = T.branches[c]
            img = sorted((float(br(lo)), float(br(hi))))
            tlo, thi = cylinder_interval(T, w[1:])
            assert img[0] == pytest.approx(tlo, abs=1e-12)
            assert img[1] == pytest.approx(thi, abs=1e-12)


# --- interval map construction


def test_bernoulli_half_is_doubling():
    T = build_interval_map_from_markov(MarkovShift.bernoulli([0.5, 0.5], symbols=(1, 2)))
    assert T.symbol_interval(1) == pytest.approx((0.0, 0.5))
    assert T.symbol_interval(2) == pytest.approx((0.5, 1.0))
    assert all(br.slope == pytest.approx(2.0) for br in T.branches)


def test_bernoulli_two_thirds():
    shift = MarkovShift.bernoulli([2 / 3, 1 / 3], symbols=(1, 2))
    T = build_interval_map_from_markov(shift)
    assert T.symbol_interval(1) == pytest.approx((0.0, 2 / 3))
    assert T.symbol_interval(2) == pytest.approx((2 / 3, 1.0))
    slopes = {T.symbols[i]: T.branches[i].slope for i in range(len(T))}
    assert slopes[1] == pytest.approx(1.5)
    assert slopes[2] == pytest.approx(3.0)
    assert cylinder_measure_error(T, shift, 3) < 1e-12


def test_symbols_reordered_by_measure():
    shift = MarkovShift.bernoulli([0.2, 0.5, 0.3], symbols=("a", "b", "c"))
    T = build_interval_map_from_markov(shift)
    assert T.meta["symbol_order"] == ("b", "c", "a")
    assert T.symbol_interval("b")[0] == 0.0


@pytest.mark.parametrize("shift_maker", [golden_shift, zcover_shift])
def test_cylinder_measure_match_depth4(shift_maker):
    shift = shift_maker()
    T = build_interval_map_from_markov(shift)
    assert cylinder_measure_error(T, shift, 4) < 1e-12


@pytest.mark.parametrize("shift_maker", [golden_shift, zcover_shift,
                                         lambda: MarkovShift.bernoulli([0.2, 0.5, 0.3])])
def test_lexicographic_order_matches_interval_order(shift_maker):
    shift = shift_maker()
    T = build_interval_map_from_markov(shift)
    rank = {s: i for i, s in enumerate(T.meta["symbol_order"])}
    for d in range(1, 5):
        words = list(shift.words(d))
        ivs = {w: cylinder_interval(T, w) for w in words}
        for u, v in itertools.combinations(words, 2):
            lex = tuple(rank[s] for s in u) < tuple(rank[s] for s in v)
            assert lex == (ivs[u][1] <= ivs[v][0] + 1e-15)


def test_nonstationary_measure_rejected():
    shift = MarkovShift((1, 2), np.ones((2, 2), bool), np.array([0.9, 0.1]), np.full((2, 2), 0.5))
    assert not shift.stationary
    with pytest.raises(ValueError):
        build_interval_map_from_markov(shift)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5))
def test_construction_on_random_bernoulli(weights):
    p = np.array(weights) / sum(weights)
    shift = MarkovShift.bernoulli(p)
    T = build_interval_map_from_markov(shift)
    assert T.markov
    assert cylinder_measure_error(T, shift, 3) < 1e-12


# --- Markov flag and regularity


def test_markov_flag_detects_non_markov_image():
    part = Partition(((0.0, 0.5), (0.5, 1.0)), (0, 1))
    T = IntervalMap(part, (AffineBranch(1.5, 0.0), AffineBranch(2.0, -1.0)))
    assert not T.markov
    assert doubling_map().markov


def test_doubling_regularity():
    T = doubling_map()
    phi = CellFunction.from_symbols(T, {0: -0.5, 1: 0.5})
    rep = validate_regularity(T, phi)
    assert rep.afu_ok and rep.gm_ok
    assert rep.holder_constant == 0.0
    assert rep.diagnostics["A_curvature_ratio"] == 0.0
    assert rep.diagnostics["F_distinct_images"] == 1
    assert rep.diagnostics["U_inf_derivative"] == 2.0


def test_slope_one_branch_fails_expansion():
    part = Partition(((0.0, 0.5), (0.5, 1.0)), (0, 1))
    T = IntervalMap(part, (AffineBranch(1.0, 0.5), AffineBranch(2.0, -1.0)))
    rep = validate_regularity(T)
    assert not rep.afu_ok
    assert rep.diagnostics["U"] is False


def test_holder_constant_for_depth2_function():
    T = doubling_map()
    phi = CellFunction(T, 2, {(0, 0): 0.0, (0, 1): 1.0, (1, 0): 0.0, (1, 1): 0.0})
    rep = validate_regularity(T, phi)
    # words (0,0) and (0,1) first differ at position 2: 1 / theta^2
    assert rep.holder_constant == pytest.approx(4.0)


# --- cell functions and config


def test_cell_function_mean_and_values():
    T = full_branch_map(4)
    f = CellFunction.from_symbols(T, {0: 1.0, 1: 2.0, 2: 1.0, 3: 1.0})
    assert f.mean() == pytest.approx(1.25)
    assert f(0.3) == pytest.approx(2.0)
    assert f.inf == 1.0 and f.sup == 2.0


def test_word_measure_sums_to_one():
    T = build_interval_map_from_markov(zcover_shift())
    for d in (1, 2, 3):
        assert sum(word_measure(T, w) for w in admissible_words(T, d)) == pytest.approx(1.0, abs=1e-12)


def test_map_from_decimal_config(tmp_path):
    cfg = {"type": "interval", "cells": [["0", "0.5"], ["0.5", "1"]],
           "branches": [{"slope": "2", "offset": "0"}, {"slope": "2", "offset": "-1"}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    T = map_from_config(path)
    assert T.apply(0.3) == pytest.approx(0.6)
    cfg2 = {"type": "markov_shift", "symbols": [1, 2], "adjacency": [[1, 1], [1, 0]]}
    G = map_from_config(cfg2)
    assert G.markov and len(G) == 3
