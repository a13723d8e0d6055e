from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numba import njit
from numpy.testing import assert_allclose, assert_array_equal

from fcwq.combine import (CombinationWeights, QuantileGrid, combination_objective, combine,
                          equal_weight_start, estimate_combination_weights, make_grid, monotonize)
from fcwq.scoring import quantile_loss
from fcwq.simulate import Dgp, simulate


@njit(cache=True)
def _grid_min(x, r, alpha, c0s, c1s):
    best = np.inf
    for a in c0s:
        for b in c1s:
            s = 0.0
            for t in range(r.size):
                u = r[t] - a - b * x[t]
                s += u * (alpha - 1.0) if u < 0 else u * alpha
            best = min(best, s / r.size)
    return best


def test_grid_three_levels():
    g = make_grid(0.025, 0.005, 3)
    assert_allclose(g.levels, [0.005, 0.015, 0.025], atol=1e-15)
    assert g.eta == pytest.approx(0.01)
    assert g.alpha == 0.025 and g.m == 3


def test_grid_five_levels():
    assert_allclose(make_grid(0.025, 0.005, 5).levels, [0.005, 0.010, 0.015, 0.020, 0.025], atol=1e-15)


@pytest.mark.parametrize("a1,m", [(0.025, 3), (0.03, 3), (0.0, 3), (0.005, 1)])
def test_grid_guards(a1, m):
    with pytest.raises(ValueError):
        make_grid(0.025, a1, m)


def test_grid_type_rejects_unsorted():
    with pytest.raises(ValueError):
        QuantileGrid(np.array([0.02, 0.01]))


def test_combine_examples():
    assert combine([-2.0, -3.0], [-0.1, 0.5, 0.5]) == pytest.approx(-2.6, abs=1e-15)
    row = np.array([-2.0, -3.0, -1.5])
    assert combine(row, [0, 1, 0, 0]) == -2.0
    assert combine(row, equal_weight_start(3)) == pytest.approx(row.mean(), abs=1e-15)
    with pytest.raises(ValueError):
        combine(row, [0, 1, 0])


@given(arrays(float, (4, 3), elements=st.floats(-5, 5)), arrays(float, 4, elements=st.floats(-2, 2)),
       arrays(float, 4, elements=st.floats(-2, 2)), st.floats(-3, 3))
def test_combine_linear(rows, c, d, s):
    lhs = combine(rows, c + s * d)
    assert_allclose(lhs, combine(rows, c) + s * combine(rows, d), atol=1e-9)


def test_monotonize_examples():
    assert_array_equal(monotonize([-2.0, -2.5, -2.2]), [-2.5, -2.2, -2.0])
    srt = np.array([-3.0, -2.0, -1.0])
    assert_array_equal(monotonize(srt), srt)
    assert_array_equal(monotonize([-1.0, -1.0, -1.0]), [-1.0, -1.0, -1.0])


@settings(max_examples=200)
@given(arrays(float, (7, 4), elements=st.floats(-1e6, 1e6)))
def test_monotonize_properties(rows):
    out = monotonize(rows)
    assert np.all(np.diff(out, axis=1) >= 0)
    assert_array_equal(monotonize(out), out)
    assert_array_equal(np.sort(out, axis=1), np.sort(rows, axis=1))


def test_rearrangement_reduces_loss_on_panels():
    levels = np.array([0.005, 0.015, 0.025])
    for s in range(20):
        sim = simulate(Dgp(length=500, seed=300 + s), levels)
        rng = np.random.default_rng(s)
        noisy = sim.var + rng.normal(0, 0.4, sim.var.shape)
        r = sim.series.returns
        before = sum(quantile_loss(r, noisy[:, j], a).sum() for j, a in enumerate(levels))
        fixed = monotonize(noisy)
        after = sum(quantile_loss(r, fixed[:, j], a).sum() for j, a in enumerate(levels))
        assert after <= before + 1e-9


def test_one_model_matches_dense_grid():
    sim = simulate(Dgp(length=1000, seed=1), [0.025])
    x = sim.var[:, 0] * 1.1 + 0.05
    r = sim.series.returns
    c0s = np.round(np.arange(-1, 1 + 1e-9, 1e-3), 3)
    c1s = np.round(np.arange(0, 2 + 1e-9, 1e-3), 3)
    best = _grid_min(x, r, 0.025, c0s, c1s)
    w = estimate_combination_weights(x[:, None], r, 0.025, seed=1)
    assert abs(w.value - best) <= 1e-5
    assert w.value == pytest.approx(combination_objective(x[:, None], r, 0.025)(w.coef), abs=1e-15)


def test_one_true_quantile_model_is_unbiased():
    # a single N=2000 draw has coefficient SD near 0.19, so the replication mean is tested
    coefs = []
    for s in range(40):
        sim = simulate(Dgp(length=2000, seed=100 + s), [0.025])
        coefs.append(estimate_combination_weights(sim.var, sim.series.returns, 0.025, seed=s).coef)
    assert_allclose(np.mean(coefs, axis=0), [0.0, 1.0], atol=0.15)


def test_perfect_beats_noisy():
    sim = simulate(Dgp(length=2000, seed=0), [0.025])
    x = sim.var[:, 0]
    r = sim.series.returns
    noisy = x + np.random.default_rng(0).normal(0, 0.5, x.size)
    X = np.column_stack([x, noisy])
    w = estimate_combination_weights(X, r, 0.025)
    comb = combine(X, w)
    assert quantile_loss(r, comb, 0.025).sum() <= quantile_loss(r, noisy, 0.025).sum()
    assert abs(w.coef[1]) > abs(w.coef[2])


def test_identical_columns_same_predictor(gjr_sim):
    x = gjr_sim.var[:1000, -1] * 0.9
    r = gjr_sim.series.returns[:1000]
    one = estimate_combination_weights(x[:, None], r, 0.025)
    two = estimate_combination_weights(np.column_stack([x, x]), r, 0.025)
    assert two.value == pytest.approx(one.value, abs=1e-6)
    assert_allclose(combine(np.column_stack([x, x]), two), combine(x[:, None], one), atol=0.05)


def test_minimizer_beats_equal_weights(gjr_sim):
    X = np.column_stack([gjr_sim.var[:800, -1], 0.8 * gjr_sim.var[:800, -1] - 0.3])
    r = gjr_sim.series.returns[:800]
    w = estimate_combination_weights(X, r, 0.025, n_random=5)
    assert w.value <= combination_objective(X, r, 0.025)(equal_weight_start(2))


def test_deterministic(gjr_sim):
    X = np.column_stack([gjr_sim.var[:600, -1], gjr_sim.var[:600, 0]])
    r = gjr_sim.series.returns[:600]
    a = estimate_combination_weights(X, r, 0.025, seed=(4, 1))
    b = estimate_combination_weights(X, r, 0.025, seed=(4, 1))
    assert_array_equal(a.coef, b.coef)


def test_constant_column_is_harmless(gjr_sim):
    r = gjr_sim.series.returns[:600]
    X = np.column_stack([gjr_sim.var[:600, -1], np.full(600, -2.0)])
    w = estimate_combination_weights(X, r, 0.025, n_random=3)
    assert np.all(np.isfinite(w.coef))


def test_weights_reject_nonfinite():
    with pytest.raises(ValueError):
        CombinationWeights(np.array([0.0, np.nan]), 0.025)
