"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``[acceptance N] PASS|FAIL`` line to the terminal (also
under pytest's output capture) and then asserts. Run on its own with::

    pytest tests/test_acceptance.py -v
"""
from __future__ import annotations

import itertools
import math
import sys
import time

import numpy as np
import pytest
from numba import njit
from scipy import stats

from fcwq.cli import main as cli_main
from fcwq.combine import combine, estimate_combination_weights, make_grid, monotonize
from fcwq.data import ReturnSeries, WindowSpec
from fcwq.evaluation import (aggregate_joint_loss, es_calibration_test, var_calibration_test,
                             vrate_ratio)
from fcwq.models.universe import CAVIAR_AS, EGARCH_T, GJR_HS, GJR_T, UniverseConfig
from fcwq.pipeline import FC_SA, FC_WQ, PipelineConfig, run, run_variants
from fcwq.scoring import al_joint_score, quantile_loss
from fcwq.simulate import IID_T, Dgp, simulate, write_simulation
from fcwq.wq import beta_weights

ALPHA = 0.025
GRID = make_grid(ALPHA, 0.005, 3)
UNIVERSE4 = (GJR_T, EGARCH_T, GJR_HS, CAVIAR_AS)


@pytest.fixture
def say(capsys):
    def _say(n, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}")
        sys.stdout.flush()
    return _say


def test_1_scoring_exactness(say):
    t0 = time.perf_counter()
    al_a = -math.log(0.975 / 4.0) + 9.75
    al_b = -math.log(0.975 / 4.0) + 0.75
    checks = [
        (float(quantile_loss(-3.0, -2.0, ALPHA)), 0.975),
        (float(quantile_loss(1.0, -2.0, ALPHA)), 0.075),
        (float(quantile_loss(-2.0, -2.0, ALPHA)), 0.0),
        (float(al_joint_score(-3.0, -2.0, -4.0, ALPHA)), al_a),
        (float(al_joint_score(1.0, -2.0, -4.0, ALPHA)), al_b),
    ]
    err = max(abs(a - b) for a, b in checks)
    rounded = abs(al_a - 11.16161) < 5e-6 and abs(al_b - 2.16161) < 5e-6
    ok = err <= 1e-9 and rounded
    elapsed = time.perf_counter() - t0
    say(1, ok and elapsed < 1, f"max error {err:.2e} (tol 1e-9); AL values {al_a:.5f}, {al_b:.5f}", elapsed)
    assert ok and elapsed < 1


def test_2_strict_consistency(say):
    t0 = time.perf_counter()
    steps = (-0.10, -0.05, 0.0, 0.05, 0.10)
    pert = [(a, b) for a, b in itertools.product(steps, steps) if (a, b) != (0.0, 0.0)]
    assert len(pert) == 24
    fails = 0
    for rep in range(200):
        sim = simulate(Dgp(IID_T, seed=10_000 + rep, length=5000), [ALPHA])
        r, q, es = sim.series.returns, sim.var[:, 0], sim.es[:, 0]
        base = al_joint_score(r, q, es, ALPHA)
        for dq, de in pert:
            diff = al_joint_score(r, q * (1 + dq), es * (1 + de), ALPHA) - base
            band = 3 * diff.std(ddof=1) / math.sqrt(diff.size)
            fails += diff.mean() < -band
    elapsed = time.perf_counter() - t0
    ok = fails <= 2 and elapsed < 60
    say(2, ok, f"{fails} of 4800 comparisons outside the 3-sigma band (allowed 2)", elapsed)
    assert ok


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


def test_3_combination_oracle(say):
    t0 = time.perf_counter()
    sim = simulate(Dgp(length=1000, seed=1), [ALPHA])
    x = sim.var[:, 0] * 1.1 + 0.05
    r = sim.series.returns
    grid_best = _grid_min(x, r, ALPHA, np.round(np.arange(-1, 1 + 1e-9, 1e-3), 3),
                          np.round(np.arange(0, 2 + 1e-9, 1e-3), 3))
    w1 = estimate_combination_weights(x[:, None], r, ALPHA, seed=1)
    gap = abs(w1.value - grid_best)

    sim = simulate(Dgp(length=2000, seed=0), [ALPHA])
    truth, r = sim.var[:, 0], sim.series.returns
    noisy = truth + np.random.default_rng(0).normal(0, 0.5, truth.size)
    X = np.column_stack([truth, noisy])
    w2 = estimate_combination_weights(X, r, ALPHA)
    ql_comb = float(quantile_loss(r, combine(X, w2), ALPHA).sum())
    ql_noisy = float(quantile_loss(r, noisy, ALPHA).sum())
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-5 and ql_comb <= ql_noisy and elapsed < 60
    say(3, ok, f"1-model gap to grid {gap:.2e} (tol 1e-5); 2-model QL {ql_comb:.3f} vs noisy {ql_noisy:.3f}",
        elapsed)
    assert ok


def test_4_beta_weights(say):
    t0 = time.perf_counter()
    err = max(np.max(np.abs(beta_weights(1, 1, 3) - 1 / 3)),
              np.max(np.abs(beta_weights(2, 1, 3) - [1 / 6, 1 / 3, 1 / 2])),
              np.max(np.abs(beta_weights(1, 2, 3) - [1 / 2, 1 / 3, 1 / 6])))
    rng = np.random.default_rng(4)
    ab = 10 - rng.uniform(0, 9.9, size=(1000, 2))  # (0.1, 10]
    worst_sum = worst_neg = 0.0
    for a, b in ab:
        w = beta_weights(a, b, 3)
        worst_sum = max(worst_sum, abs(w.sum() - 1))
        worst_neg = min(worst_neg, w.min())
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and worst_sum <= 1e-12 and worst_neg >= 0 and elapsed < 1
    say(4, ok, f"closed-form error {err:.1e}; worst |sum-1| {worst_sum:.1e}; min weight {worst_neg}", elapsed)
    assert ok


def test_5_monotonization(say):
    t0 = time.perf_counter()
    rows = np.random.default_rng(5).normal(-2, 1, size=(10_000, 3))
    out = monotonize(rows)
    props = (np.all(np.diff(out, axis=1) >= 0), np.array_equal(monotonize(out), out),
             np.array_equal(np.sort(rows, axis=1), np.sort(out, axis=1)))
    increases = 0
    for s in range(100):
        sim = simulate(Dgp(length=500, seed=20_000 + s), GRID.levels)
        panel = sim.var + np.random.default_rng(s).normal(0, 0.4, sim.var.shape)
        r = sim.series.returns
        before = sum(quantile_loss(r, panel[:, j], a).sum() for j, a in enumerate(GRID.levels))
        fixed = monotonize(panel)
        after = sum(quantile_loss(r, fixed[:, j], a).sum() for j, a in enumerate(GRID.levels))
        increases += after > before + 1e-9
    elapsed = time.perf_counter() - t0
    ok = all(props) and increases == 0 and elapsed < 60
    say(5, ok, f"sorted/idempotent/multiset {props}; loss increased on {increases} of 100 panels", elapsed)
    assert ok


def _e2e_config():
    return PipelineConfig(grid=GRID, window=WindowSpec(1000, 500),
                          universe=UniverseConfig(models=UNIVERSE4), warm_start=True)


@pytest.fixture(scope="module")
def e2e_reps():
    """20 seeded replications of FC-WQ and FC-SA on the default GJR-t DGP."""
    cfg = _e2e_config()
    out = []
    t0 = time.perf_counter()
    for seed in range(20):
        sim = simulate(Dgp(length=1500, seed=seed), GRID.levels)
        res = run_variants(cfg, sim.series, (FC_WQ, FC_SA))
        r = sim.series.returns[1000:]
        row = {"r": r, "true_var": sim.var[1000:, -1], "true_es": sim.es[1000:, -1]}
        for v, recs in res.records.items():
            row[v] = (np.array([x.var_forecast for x in recs]), np.array([x.es_forecast for x in recs]))
        out.append(row)
    return out, time.perf_counter() - t0


def test_6_end_to_end(say, e2e_reps):
    reps, elapsed = e2e_reps
    ratios, loss_ratios, wins = [], [], 0
    for row in reps:
        r = row["r"]
        var, es = row[FC_WQ]
        ratios.append(vrate_ratio(r, var, ALPHA))
        wq = aggregate_joint_loss(r, var, es, ALPHA)
        sa = aggregate_joint_loss(r, *row[FC_SA], ALPHA)
        true = aggregate_joint_loss(r, row["true_var"], row["true_es"], ALPHA)
        loss_ratios.append(wq / true)
        wins += wq <= sa
    r_all = np.concatenate([row["r"] for row in reps])
    var_all = np.concatenate([row[FC_WQ][0] for row in reps])
    es_all = np.concatenate([row[FC_WQ][1] for row in reps])
    pooled_vr = vrate_ratio(r_all, var_all, ALPHA)
    pooled_loss = (aggregate_joint_loss(r_all, var_all, es_all, ALPHA)
                   / aggregate_joint_loss(r_all, np.concatenate([row["true_var"] for row in reps]),
                                          np.concatenate([row["true_es"] for row in reps]), ALPHA))
    ok_a = 0.5 <= ratios[0] <= 1.6 and 0.5 <= pooled_vr <= 1.6
    ok_b = loss_ratios[0] <= 1.10 and pooled_loss <= 1.10
    ok_c = wins / len(reps) >= 0.55
    in_a = sum(0.5 <= x <= 1.6 for x in ratios)
    in_b = sum(x <= 1.10 for x in loss_ratios)
    ok = ok_a and ok_b and ok_c and elapsed < 1800
    say(6, ok, f"(a) VRate/alpha seed0 {ratios[0]:.3f}, pooled {pooled_vr:.3f}, {in_a}/20 reps in band "
               f"[{'ok' if ok_a else 'fail'}]; (b) loss/true seed0 {loss_ratios[0]:.4f}, pooled {pooled_loss:.4f}, "
               f"{in_b}/20 reps <= 1.10 [{'ok' if ok_b else 'fail'}]; (c) FC-WQ <= FC-SA in {wins}/20 "
               f"[{'ok' if ok_c else 'fail'}]", elapsed)
    assert ok_a and ok_b and ok_c
    assert elapsed < 1800


def test_7_no_look_ahead(say):
    t0 = time.perf_counter()
    sim = simulate(Dgp(length=1080, seed=77), GRID.levels)
    cfg = PipelineConfig(grid=GRID, window=WindowSpec(1000, 80), universe=UniverseConfig(models=UNIVERSE4),
                         warm_start=True)
    base = run(cfg, sim.series)
    hs = np.sort(np.random.default_rng(7).choice(80, size=10, replace=False))
    identical = 0
    for h in hs:
        r = sim.series.returns.copy()
        r[1000 + h] = -r[1000 + h] - 7.5
        bumped = ReturnSeries(sim.series.dates, r)
        cfg_h = PipelineConfig(grid=GRID, window=WindowSpec(1000, int(h) + 1),
                               universe=UniverseConfig(models=UNIVERSE4), warm_start=True)
        rec = run(cfg_h, bumped)[h]
        identical += (rec.var_forecast == base[h].var_forecast and rec.es_forecast == base[h].es_forecast
                      and np.array_equal(rec.combined, base[h].combined))
    elapsed = time.perf_counter() - t0
    ok = identical == len(hs) and elapsed < 300
    say(7, ok, f"{identical}/{len(hs)} perturbed origins bit-identical (h = {hs.tolist()})", elapsed)
    assert ok


def test_8_calibration(say):
    t0 = time.perf_counter()
    big_h, reps = 20_000, 500
    pv, pe = [], []
    for rep in range(reps):
        s = simulate(Dgp(length=big_h, seed=30_000 + rep), [ALPHA])
        r, q, es = s.series.returns, s.var[:, 0], s.es[:, 0]
        pv.append(var_calibration_test(r, q, ALPHA))
        pe.append(es_calibration_test(r, q, es, ALPHA))
    ks_v = stats.kstest(pv, "uniform").statistic
    ks_e = stats.kstest(pe, "uniform").statistic
    size_e = np.mean(np.array(pe) < 0.10)

    sv, se, bv, be = [], [], [], []
    for rep in range(reps):
        s = simulate(Dgp(length=2000, seed=40_000 + rep), [ALPHA])
        r, q, es = s.series.returns, s.var[:, 0], s.es[:, 0]
        sv.append(var_calibration_test(r, q, ALPHA))
        se.append(es_calibration_test(r, q, es, ALPHA))
        bv.append(var_calibration_test(r, q + 0.5 * s.sigma, ALPHA))
        be.append(es_calibration_test(r, q, 0.7 * es, ALPHA))
    pow_v = np.mean(np.array(bv) < 0.10)
    pow_e = np.mean(np.array(be) < 0.10)
    ks_v2 = stats.kstest(sv, "uniform").statistic
    ks_e2 = stats.kstest(se, "uniform").statistic
    elapsed = time.perf_counter() - t0
    ok = ks_v < 0.08 and ks_e < 0.08 and pow_v > 0.5 and pow_e > 0.5 and elapsed < 600
    say(8, ok, f"size at H={big_h}: KS VaR {ks_v:.3f}, KS ES {ks_e:.3f} (tol 0.08), ES reject@10% {size_e:.3f}; "
               f"power at H=2000: VaR {pow_v:.2f}, ES {pow_e:.2f}; "
               f"[info] KS at H=2000: VaR {ks_v2:.3f}, ES {ks_e2:.3f}", elapsed)
    assert ok


def test_9_determinism(say, tmp_path):
    t0 = time.perf_counter()
    sim = simulate(Dgp(length=1030, seed=9), GRID.levels)
    data = tmp_path / "sim.csv"
    write_simulation(sim, data)
    cfg = tmp_path / "config.yaml"
    cfg.write_text("window: {n: 1000, h: 30}\n"
                   "universe.models: [GJR-GARCH-t, EGARCH-t, GJR-GARCH-t-HS, CAViaR-AS]\n"
                   "optimizer.seed: 9\n")
    for out in ("run1", "run2"):
        assert cli_main(["run", "--config", str(cfg), "--input", str(data), "--out", str(tmp_path / out),
                         "--variants", "FC-WQ,FC-SA"]) == 0
    names = ("forecasts", "panel", "weights", "combined", "diagnostics")
    same = [(tmp_path / "run1" / f"{n}.csv").read_bytes() == (tmp_path / "run2" / f"{n}.csv").read_bytes()
            for n in names]
    elapsed = time.perf_counter() - t0
    ok = all(same)
    say(9, ok, f"{sum(same)}/{len(names)} output CSVs byte-identical across two runs", elapsed)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
