"""Rolling two-step forecasting: universe, combination, weighted-quantile ES.

Rows are 0-based. Window ``h`` holds returns ``h .. N+h-1`` and forecasts row
``N+h``. The quantile universe stacks the in-sample fits of window 0 (rows
``0 .. N-1``) on top of the one-step forecasts of windows ``0 .. H-1``
(rows ``N .. N+H-1``).

At origin ``h`` the combination coefficients are fitted on universe rows
``h .. N+h-1``; the same coefficients map those rows to the combined window
path used to fit the ES weights, and map row ``N+h`` to the combined
forecast. Every combined row is sorted across levels.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .combine import QuantileGrid, estimate_combination_weights, make_grid, monotonize
from .data import ReturnSeries, WindowSpec
from .models.universe import ModelFailure, UniverseConfig, UniverseFitter
from .optimize import MAX_ITER, NONSMOOTH_TOL, SMOOTH_TOL, OptimizationError
from .wq import WqParams, estimate_wq_params, es_from_weights, simple_average_es

log = logging.getLogger(__name__)

FC_WQ = "FC-WQ"
FC_SA = "FC-SA"
WQ_SINGLE = "WQ-single"
SA_SINGLE = "SA-single"
VARIANTS = (FC_WQ, FC_SA, WQ_SINGLE, SA_SINGLE)

_FLOAT = "%.17g"


class PipelineError(RuntimeError):
    """An unrecoverable failure at a given forecast origin and stage."""

    def __init__(self, origin: int, stage: str, cause: Exception):
        super().__init__(f"origin {origin}, stage {stage}: {cause}")
        self.origin = origin
        self.stage = stage


def _combines(variant: str) -> bool:
    return variant.startswith("FC-")


def _uses_wq(variant: str) -> bool:
    return variant in (FC_WQ, WQ_SINGLE)


@dataclass
class PipelineConfig:
    grid: QuantileGrid = field(default_factory=lambda: make_grid(0.025, 0.005, 3))
    window: WindowSpec = field(default_factory=lambda: WindowSpec(1000, 2000))
    universe: UniverseConfig = field(default_factory=UniverseConfig)
    variant: str = FC_WQ
    seed: int = 0
    combo_starts: int = 20
    wq_starts: int = 10
    warm_start: bool = False
    reestimate_every: int = 1
    nonsmooth_tol: float = NONSMOOTH_TOL
    smooth_tol: float = SMOOTH_TOL
    max_iter: int = MAX_ITER

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {list(VARIANTS)}")
        if not _combines(self.variant) and len(self.universe.models) != 1:
            raise ValueError(f"{self.variant} needs exactly one universe model")
        if self.reestimate_every < 1:
            raise ValueError("reestimate_every must be at least 1")

    @property
    def alpha(self) -> float:
        return self.grid.alpha


@dataclass
class QuantilePanel:
    """Universe quantiles ``values[t, j, i]`` for row t, level j, model i."""

    dates: np.ndarray
    levels: np.ndarray
    models: tuple
    values: np.ndarray
    n_insample: int
    flags: np.ndarray  # (T, n_mod) strings, "" when the model fit normally

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def to_frame(self) -> pd.DataFrame:
        T, M, K = self.values.shape
        source = np.where(np.arange(T) < self.n_insample, "insample", "forecast")
        return pd.DataFrame({
            "date": np.repeat(pd.to_datetime(self.dates), M * K),
            "level": np.tile(np.repeat(self.levels, K), T),
            "model": np.tile(np.asarray(self.models, dtype=object), T * M),
            "var": self.values.reshape(-1),
            "source": np.repeat(source, M * K),
            "flag": np.repeat(self.flags, M, axis=0).reshape(-1),
        })

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=_FLOAT, date_format="%Y-%m-%d")

    @classmethod
    def from_csv(cls, path: str | Path) -> "QuantilePanel":
        df = pd.read_csv(path, float_precision="round_trip", keep_default_na=False)
        levels = np.array(list(dict.fromkeys(df["level"].astype(float))))
        models = tuple(dict.fromkeys(df["model"]))
        dates = np.array(list(dict.fromkeys(df["date"])), dtype="datetime64[D]")
        T, M, K = dates.size, levels.size, len(models)
        if len(df) != T * M * K:
            raise ValueError(f"panel CSV has {len(df)} rows, expected {T * M * K}")
        values = df["var"].to_numpy(dtype=float).reshape(T, M, K)
        flags = df["flag"].astype(str).to_numpy().reshape(T, M, K)[:, 0, :]
        n_in = int((df["source"].to_numpy().reshape(T, M * K)[:, 0] == "insample").sum())
        return cls(dates, levels, models, values, n_in, flags)


@dataclass
class ForecastRecord:
    date: np.datetime64
    variant: str
    var_forecast: float
    es_forecast: float
    combined: np.ndarray
    w0: float = np.nan
    a: float = np.nan
    b: float = np.nan
    flags: tuple = ()


@dataclass
class PipelineResult:
    config: PipelineConfig
    panel: QuantilePanel
    records: dict  # variant -> list[ForecastRecord]
    weights: np.ndarray  # (H, M, n_mod + 1)
    diagnostics: list = field(default_factory=list)


def _check(config: PipelineConfig, series: ReturnSeries) -> None:
    config.window.check(len(series))


def quantile_universe(series: ReturnSeries, config: PipelineConfig) -> QuantilePanel:
    """Build the ``(N + H) x M x n_mod`` universe by rolling the model fits."""
    _check(config, series)
    N, H = config.window.in_sample_n, config.window.out_sample_h
    levels = config.grid.levels
    ucfg = config.universe
    if config.warm_start and not ucfg.warm_start:
        ucfg = dataclasses.replace(ucfg, warm_start=True)
    fitter = UniverseFitter(levels, ucfg)
    K = len(ucfg.models)
    T = N + H
    values = np.empty((T, levels.size, K))
    flags = np.full((T, K), "", dtype=object)
    r = series.returns
    for h in range(max(H, 1)):
        try:
            sl = fitter.fit_window(r[h:N + h], h, insample=(h == 0))
        except ModelFailure as exc:
            raise PipelineError(h, "universe", exc) from exc
        if h == 0:
            values[:N] = sl.insample
        if h < H:
            values[N + h] = sl.forecast
            flags[N + h] = sl.flags
    return QuantilePanel(series.dates[:T].copy(), levels.copy(), tuple(ucfg.models), values, N,
                         flags.astype(str))


def _check_panel(panel: QuantilePanel, series: ReturnSeries, config: PipelineConfig) -> None:
    N, H = config.window.in_sample_n, config.window.out_sample_h
    if panel.values.shape[0] != N + H or panel.n_insample != N:
        raise ValueError(f"panel has {panel.values.shape[0]} rows ({panel.n_insample} in-sample); "
                         f"config needs {N + H} ({N})")
    if not np.allclose(panel.levels, config.grid.levels, rtol=0, atol=1e-15):
        raise ValueError("panel levels differ from the configured grid")
    if tuple(panel.models) != tuple(config.universe.models):
        raise ValueError("panel models differ from the configured universe")
    if not np.array_equal(panel.dates, series.dates[:N + H]):
        raise ValueError("panel dates do not match the return series")


def run_variants(config: PipelineConfig, series: ReturnSeries, variants=None,
                 panel: QuantilePanel | None = None) -> PipelineResult:
    """Run several variants that share the universe and the step-1 fits.

    All requested variants must agree on whether step 1 combines models.
    """
    variants = tuple(variants or (config.variant,))
    for v in variants:
        dataclasses.replace(config, variant=v)  # validates the variant
    if len({_combines(v) for v in variants}) != 1:
        raise ValueError("variants mix combined and single-model step 1")
    _check(config, series)
    if panel is None:
        panel = quantile_universe(series, config)
    else:
        _check_panel(panel, series, config)
    N, H = config.window.in_sample_n, config.window.out_sample_h
    M = config.grid.m
    K = panel.values.shape[2]
    levels = config.grid.levels
    alpha = config.alpha
    r = series.returns
    combined_mode = _combines(variants[0])
    warm = config.warm_start
    k = config.reestimate_every

    coef = np.zeros((M, K + 1))
    coef[:, 1:] = 1.0 if not combined_mode else 1.0 / K
    have_coef = not combined_mode
    theta: dict = {v: None for v in variants if _uses_wq(v)}
    weights_out = np.empty((H, M, K + 1))
    records: dict = {v: [] for v in variants}
    diags: list = []

    for h in range(H):
        t = N + h
        date = series.dates[t]
        X = panel.values[h:t]
        rwin = r[h:t]
        origin_flags = [f"{m}:{f}" for m, f in zip(panel.models, panel.flags[t]) if f]
        refit = h % k == 0
        if combined_mode and refit:
            first = not have_coef
            for j in range(M):
                try:
                    cw = estimate_combination_weights(
                        X[:, j, :], rwin, levels[j],
                        n_random=0 if (warm and not first) else config.combo_starts,
                        seed=(config.seed, 1, h, j),
                        start=coef[j] if (warm and not first) else None,
                        tol=config.nonsmooth_tol, max_iter=config.max_iter)
                except OptimizationError as exc:
                    if first:
                        raise PipelineError(h, f"combination level {levels[j]}", exc) from exc
                    log.warning("origin %d: combination at level %g failed (%s); reusing previous",
                                h, levels[j], exc)
                    origin_flags.append(f"combination_carried:{levels[j]:g}")
                    diags.append((date, "combination", levels[j], np.nan, False, "carried"))
                    continue
                coef[j] = cw.coef
                diags.append((date, "combination", levels[j], cw.value, cw.converged, ""))
            have_coef = True
        weights_out[h] = coef
        comb_win = monotonize(coef[:, 0] + np.einsum("tjk,jk->tj", X, coef[:, 1:]))
        comb_fc = monotonize(coef[:, 0] + np.einsum("jk,jk->j", panel.values[t], coef[:, 1:]))
        var = float(comb_fc[-1])

        for v in variants:
            flags = list(origin_flags)
            w0 = a = b = np.nan
            if _uses_wq(v):
                prev = theta[v]
                if refit or prev is None:
                    try:
                        prev_ok = warm and prev is not None
                        theta[v] = estimate_wq_params(
                            comb_win, rwin, alpha,
                            n_random=0 if prev_ok else config.wq_starts,
                            seed=(config.seed, 2, h), start=prev if prev_ok else None,
                            tol=config.smooth_tol, max_iter=config.max_iter)
                        diags.append((date, f"wq:{v}", alpha, theta[v].value, True, ""))
                    except OptimizationError as exc:
                        if prev is None:
                            raise PipelineError(h, f"wq {v}", exc) from exc
                        log.warning("origin %d: WQ fit failed (%s); reusing previous", h, exc)
                        flags.append("wq_carried")
                        diags.append((date, f"wq:{v}", alpha, np.nan, False, "carried"))
                p: WqParams = theta[v]
                es = es_from_weights(comb_fc, p.w0, p.weights(M))
                w0, a, b = p.w0, p.a, p.b
            else:
                es = simple_average_es(comb_fc)
            if es > var:
                flags.append("es_above_var")
            records[v].append(ForecastRecord(date, v, var, float(es), comb_fc.copy(), w0, a, b,
                                             tuple(flags)))
    return PipelineResult(config, panel, records, weights_out, diags)


def run(config: PipelineConfig, series: ReturnSeries,
        panel: QuantilePanel | None = None) -> list[ForecastRecord]:
    """Forecast records for ``config.variant`` in date order."""
    return run_variants(config, series, (config.variant,), panel).records[config.variant]


# ---------------------------------------------------------------------------
# Persistence

def records_frame(records, levels) -> pd.DataFrame:
    rows = []
    for rec in records:
        row = {"date": pd.Timestamp(rec.date), "variant": rec.variant, "var_forecast": rec.var_forecast,
               "es_forecast": rec.es_forecast, "w0": rec.w0, "a": rec.a, "b": rec.b}
        for lv, q in zip(levels, rec.combined):
            row[f"q_{lv:g}"] = q
        row["flags"] = ";".join(rec.flags)
        rows.append(row)
    cols = ["date", "variant", "var_forecast", "es_forecast", "w0", "a", "b"]
    cols += [f"q_{lv:g}" for lv in levels] + ["flags"]
    return pd.DataFrame(rows, columns=cols)


def write_outputs(result: PipelineResult, out_dir: str | Path) -> dict:
    """Write forecasts, panel, weights, combined quantiles and diagnostics CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    levels = result.config.grid.levels
    paths = {name: out / f"{name}.csv" for name in ("forecasts", "panel", "weights", "combined", "diagnostics")}
    recs = [rec for v in result.records for rec in result.records[v]]
    kw = {"index": False, "float_format": _FLOAT, "date_format": "%Y-%m-%d"}
    records_frame(recs, levels).to_csv(paths["forecasts"], **kw)
    result.panel.to_csv(paths["panel"])
    first = next(iter(result.records.values()), [])
    dates = [rec.date for rec in first]
    wrows = []
    crow = []
    for h, d in enumerate(dates):
        for j, lv in enumerate(levels):
            wrows.append({"date": pd.Timestamp(d), "level": lv,
                          "weights": json.dumps([float(x) for x in result.weights[h, j]])})
            crow.append({"date": pd.Timestamp(d), "level": lv, "value": first[h].combined[j]})
    pd.DataFrame(wrows, columns=["date", "level", "weights"]).to_csv(paths["weights"], **kw)
    pd.DataFrame(crow, columns=["date", "level", "value"]).to_csv(paths["combined"], **kw)
    pd.DataFrame([(pd.Timestamp(d), *rest) for d, *rest in result.diagnostics],
                 columns=["date", "stage", "level", "objective", "converged", "note"]).to_csv(
        paths["diagnostics"], **kw)
    return paths
