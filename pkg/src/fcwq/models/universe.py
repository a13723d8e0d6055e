"""The individual VaR forecasters combined in step 1.

Volatility-based models are fitted once per window and evaluated at every
grid level; CAViaR-AS and CARE-AS are refitted per level. A model that fails
on a window keeps its previous forecast and reports a flag.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .care import fit_care_as
from .caviar import fit_caviar_as
from .garch import EGARCH, GJR, fit_garch
from .tails import TailError, fhs_tail, parametric_tail, pot_tail
from ..optimize import OptimizationError

log = logging.getLogger(__name__)

GJR_T = "GJR-GARCH-t"
EGARCH_T = "EGARCH-t"
POT_GJR = "POT-GJR-GARCH-t"
POT_EGARCH = "POT-EGARCH-t"
GJR_HS = "GJR-GARCH-t-HS"
EGARCH_HS = "EGARCH-t-HS"
CAVIAR_AS = "CAViaR-AS"
CARE_AS = "CARE-AS"

ALL_MODELS = (GJR_T, EGARCH_T, POT_GJR, POT_EGARCH, GJR_HS, EGARCH_HS, CAVIAR_AS, CARE_AS)

_VOL = {GJR_T: GJR, POT_GJR: GJR, GJR_HS: GJR, EGARCH_T: EGARCH, POT_EGARCH: EGARCH, EGARCH_HS: EGARCH}
_TAIL = {GJR_T: "t", EGARCH_T: "t", POT_GJR: "pot", POT_EGARCH: "pot", GJR_HS: "fhs", EGARCH_HS: "fhs"}


class ModelFailure(RuntimeError):
    """A model could not be fitted and has no earlier forecast to fall back on."""


@dataclass
class UniverseConfig:
    models: tuple = ALL_MODELS
    pot_threshold_frac: float = 0.1
    care_grid_size: int = 100
    care_search: str = "grid"
    caviar_candidates: int = 10_000
    caviar_refine: int = 10
    warm_start: bool = False
    seed: int = 0
    smooth_tol: float = 1e-8
    nonsmooth_tol: float = 1e-7
    max_iter: int = 5000

    def __post_init__(self):
        self.models = tuple(self.models)
        unknown = [m for m in self.models if m not in ALL_MODELS]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {list(ALL_MODELS)}")
        if not self.models:
            raise ValueError("universe needs at least one model")


@dataclass
class UniverseSlice:
    """Universe output for one window: ``forecast[j, i]`` is level j, model i."""

    forecast: np.ndarray
    es_forecast: np.ndarray
    insample: np.ndarray | None
    insample_es: np.ndarray | None
    flags: list = field(default_factory=list)


class UniverseFitter:
    """Fits the universe window after window, keeping warm-start and fallback state."""

    def __init__(self, levels, config: UniverseConfig | None = None):
        self.levels = np.asarray(levels, dtype=float)
        self.config = config or UniverseConfig()
        self.params: dict = {}
        self.last: dict = {}

    def _seed(self, h: int, tag: int) -> int:
        return int(np.random.SeedSequence([self.config.seed, h, tag]).generate_state(1)[0])

    def _garch(self, kind: str, r: np.ndarray):
        cfg = self.config
        start = self.params.get(kind) if cfg.warm_start else None
        fit = fit_garch(r, kind, start=start, tol=cfg.smooth_tol, max_iter=cfg.max_iter)
        self.params[kind] = fit.raw
        return fit

    def _vol_model(self, name: str, fit):
        tail = _TAIL[name]
        if tail == "t":
            tf = parametric_tail(fit.nu, self.levels)
        elif tail == "pot":
            tf = pot_tail(fit, self.levels, self.config.pot_threshold_frac)
        else:
            tf = fhs_tail(fit, self.levels)
        var_f, es_f = tf.var_es(fit.sigma_forecast)
        var_in, es_in = tf.var_es(fit.sigma_path)
        return var_f, es_f, var_in, es_in

    def _caviar(self, r: np.ndarray, h: int):
        cfg = self.config
        out = []
        for j, a in enumerate(self.levels):
            key = (CAVIAR_AS, j)
            start = self.params.get(key) if cfg.warm_start else None
            fit = fit_caviar_as(r, a, n_candidates=cfg.caviar_candidates, n_refine=cfg.caviar_refine,
                                seed=self._seed(h, 100 + j), start=start, tol=cfg.nonsmooth_tol,
                                max_iter=cfg.max_iter)
            self.params[key] = fit.betas
            out.append(fit)
        var_f = np.array([f.q_forecast for f in out])
        var_in = np.column_stack([f.q_path for f in out])
        return var_f, np.full_like(var_f, np.nan), var_in, np.full_like(var_in, np.nan)

    def _care(self, r: np.ndarray):
        cfg = self.config
        out = []
        for j, a in enumerate(self.levels):
            key = (CARE_AS, j)
            start = self.params.get(key) if cfg.warm_start else None
            fit = fit_care_as(r, a, grid_size=cfg.care_grid_size, search=cfg.care_search, start=start,
                              max_iter=cfg.max_iter)
            self.params[key] = fit.betas
            out.append(fit)
        var_f = np.array([f.var_forecast for f in out])
        es_f = np.array([f.es_forecast for f in out])
        return (var_f, es_f, np.column_stack([f.mu_path for f in out]),
                np.column_stack([f.es_path for f in out]))

    def fit_window(self, returns, h: int = 0, insample: bool = False) -> UniverseSlice:
        r = np.ascontiguousarray(returns, dtype=float)
        m, n_mod, n = self.levels.size, len(self.config.models), r.size
        forecast = np.empty((m, n_mod))
        es_forecast = np.empty((m, n_mod))
        ins = np.empty((n, m, n_mod)) if insample else None
        ins_es = np.empty((n, m, n_mod)) if insample else None
        flags = []
        vol_fits: dict = {}
        for i, name in enumerate(self.config.models):
            try:
                if name in _VOL:
                    kind = _VOL[name]
                    if kind not in vol_fits:
                        try:
                            vol_fits[kind] = self._garch(kind, r)
                        except (OptimizationError, ValueError, FloatingPointError) as exc:
                            vol_fits[kind] = exc
                    if isinstance(vol_fits[kind], Exception):
                        raise vol_fits[kind]
                    out = self._vol_model(name, vol_fits[kind])
                elif name == CAVIAR_AS:
                    out = self._caviar(r, h)
                else:
                    out = self._care(r)
                var_f, es_f, var_in, es_in = out
                if not np.all(np.isfinite(var_f)):
                    raise OptimizationError(f"{name} produced a non-finite forecast")
                flags.append("")
            except (OptimizationError, TailError, ValueError, FloatingPointError) as exc:
                if insample or name not in self.last:
                    raise ModelFailure(f"{name} failed on window {h}: {exc}") from exc
                log.warning("%s failed on window %d (%s); carrying previous forecast", name, h, exc)
                var_f, es_f = self.last[name]
                var_in = es_in = None
                flags.append(f"carried:{type(exc).__name__}")
            self.last[name] = (var_f, es_f)
            forecast[:, i] = var_f
            es_forecast[:, i] = es_f
            if insample:
                ins[:, :, i] = var_in
                ins_es[:, :, i] = es_in
        return UniverseSlice(forecast, es_forecast, ins, ins_es, flags)


def forecast_universe(window, levels, config: UniverseConfig | None = None) -> UniverseSlice:
    """Fit every selected model on one window: ``1 x M x n_mod`` forecasts plus in-sample paths."""
    returns = getattr(window, "returns", window)
    return UniverseFitter(levels, config).fit_window(returns, insample=True)
