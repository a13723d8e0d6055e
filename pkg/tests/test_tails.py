from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fcwq.models.garch import GJR, fit_garch
from fcwq.models.tails import (TailError, fhs_from_residuals, fhs_tail, fit_gpd, gpd_tail_quantile,
                               parametric_tail, parametric_var_es, pot_from_residuals, pot_tail)
from fcwq.tdist import std_t_ppf

from conftest import LEVELS3


def _t5(seed, n=10_000):
    rng = np.random.default_rng(seed)
    return rng.standard_t(5, n) * np.sqrt(3 / 5)


def test_parametric_var_unit_sigma():
    tf = parametric_tail(10.0, [0.025])
    assert tf.q[0] == pytest.approx(-2.2281 * np.sqrt(0.8), abs=1e-4)


def test_parametric_var_scales_with_sigma():
    tf = parametric_tail(10.0, [0.025])
    var, _ = tf.var_es(1.0344)
    assert var[0] == pytest.approx(1.0344 * -2.228139 * np.sqrt(0.8), abs=1e-5)


def test_parametric_median_is_zero():
    assert parametric_tail(6.0, [0.5]).q[0] == pytest.approx(0.0, abs=1e-14)


def test_parametric_es_below_var(gjr_window):
    fit = fit_garch(gjr_window, GJR)
    var, es = parametric_var_es(fit, LEVELS3)
    assert np.all(es < var) and np.all(var < 0)
    assert np.all(np.diff(var) > 0)


def test_gpd_quantile_continuous_at_zero_shape():
    ratio = np.array([0.05, 0.2, 0.5])
    base = gpd_tail_quantile(1.0, 0.0, 0.7, ratio)
    assert_allclose(base, 1.0 - 0.7 * np.log(ratio))
    for xi in (1e-6, -1e-6):
        assert np.max(np.abs(gpd_tail_quantile(1.0, xi, 0.7, ratio) - base)) < 1e-4


def test_gpd_fit_recovers_exponential():
    rng = np.random.default_rng(3)
    xi, beta = fit_gpd(rng.exponential(2.0, 20_000))
    assert abs(xi) < 0.03
    assert beta == pytest.approx(2.0, rel=0.05)


def test_pot_t5_half_percent_quantile():
    truth = std_t_ppf(0.005, 5)
    tf = pot_from_residuals(_t5(0), [0.005])
    assert abs(tf.q[0] / truth - 1) < 0.05
    assert tf.beta_gpd > 0 and tf.n_exceed == 1000
    # seed-to-seed spread: most draws land inside the band
    hits = [abs(pot_from_residuals(_t5(s), [0.005]).q[0] / truth - 1) < 0.05 for s in range(20)]
    assert sum(hits) >= 16


def test_pot_too_few_exceedances():
    with pytest.raises(TailError):
        pot_from_residuals(_t5(1, n=250), [0.005], threshold_frac=0.1)


def test_pot_threshold_range():
    with pytest.raises(TailError):
        pot_from_residuals(_t5(1), [0.005], threshold_frac=0.3)


def test_pot_ordering():
    tf = pot_from_residuals(_t5(2), LEVELS3)
    assert np.all(np.diff(tf.q) > 0)
    assert np.all(tf.c < tf.q)


def test_fhs_constructed_sample():
    z = np.linspace(-2, 2, 200)
    tf = fhs_from_residuals(z, [0.025])
    assert tf.q[0] == z[4]
    assert tf.c[0] == pytest.approx(z[:5].mean(), abs=1e-15)


def test_fhs_homogeneity():
    z = _t5(4, n=1000)
    a, b = fhs_from_residuals(z, LEVELS3), fhs_from_residuals(2 * z, LEVELS3)
    assert_allclose(b.q, 2 * a.q, rtol=1e-15)
    assert_allclose(b.c, 2 * a.c, rtol=1e-14)
    v1, e1 = a.var_es(1.3)
    v2, e2 = a.var_es(2.6)
    assert_allclose(v2, 2 * v1, rtol=1e-15)
    assert_allclose(e2, 2 * e1, rtol=1e-15)


def test_fhs_needs_two_tail_points():
    with pytest.raises(TailError):
        fhs_from_residuals(np.linspace(-1, 1, 150), [0.005])


def test_tail_methods_on_fit(gjr_window):
    fit = fit_garch(gjr_window, GJR)
    for tf in (pot_tail(fit, LEVELS3), fhs_tail(fit, LEVELS3)):
        assert np.all(tf.c < tf.q)
        assert np.all(np.diff(tf.q) > 0)
