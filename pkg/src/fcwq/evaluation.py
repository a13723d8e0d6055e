"""Out-of-sample backtests: violation rates, aggregate losses, calibration tests.

The calibration tests regress a generalized residual on a constant, the
forecast and the residual's own first lag, and Wald-test that all three
coefficients are zero using a Newey-West covariance:

* VaR: ``u[t] = alpha - I(r[t] <= VaR[t])``
* ES: ``e[t] = I(r[t] <= VaR[t]) * (r[t] - ES[t]) / (alpha * |ES[t]|)``

These regression forms are this package's choices (one residual lag, ES
residual scaled by ``|ES|``) and are labelled as such in reports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .scoring import ScoreDomainError, al_joint_score, check_level, quantile_loss

NW_LAGS = 20
MIN_CALIBRATION_OBS = 51

# Cross-index averages from the original study's proprietary data; kept for
# orientation only and never used as test targets.
REFERENCE_FC_WQ = {"mad": 0.0028, "avg_quantile_loss": 164.2, "avg_joint_loss_m3": 4257.6}

CALIBRATION_LABEL = ("regression of generalized residual on [1, forecast, lagged residual]; "
                     "Newey-West (Bartlett, 20 lags) Wald chi2(3)")


def _aligned(*arrays):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = out[0].size
    if any(a.size != n for a in out):
        raise ValueError(f"length mismatch: {[a.size for a in out]}")
    return out


def vrate(returns, var_forecasts, alpha: float | None = None) -> float:
    """Fraction of returns strictly below the VaR forecast."""
    r, q = _aligned(returns, var_forecasts)
    if r.size == 0:
        raise ValueError("empty evaluation sample")
    return float(np.mean(r < q))


def vrate_ratio(returns, var_forecasts, alpha: float) -> float:
    return vrate(returns, var_forecasts) / check_level(alpha)


def aggregate_quantile_loss(returns, var_forecasts, alpha: float) -> float:
    r, q = _aligned(returns, var_forecasts)
    return float(np.sum(quantile_loss(r, q, alpha)))


def aggregate_joint_loss(returns, var_forecasts, es_forecasts, alpha: float, dates=None) -> float:
    """Sum of AL scores; non-negative ES forecasts raise with their dates."""
    r, q, es = _aligned(returns, var_forecasts, es_forecasts)
    bad = np.flatnonzero(es >= 0)
    if bad.size:
        where = [str(dates[i]) for i in bad] if dates is not None else bad.tolist()
        raise ScoreDomainError(f"ES forecast not negative at {where}")
    return float(np.sum(al_joint_score(r, q, es, alpha)))


def newey_west_cov(X, resid, lags: int = NW_LAGS) -> np.ndarray:
    """HAC covariance of OLS coefficients with Bartlett weights ``1 - l / (lags + 1)``."""
    X = np.asarray(X, dtype=float)
    e = np.asarray(resid, dtype=float).ravel()
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more rows ({n}) than regressors ({k})")
    if lags < 0:
        raise ValueError("lags must be non-negative")
    if e.size != n:
        raise ValueError("residuals do not match the design rows")
    xtx = X.T @ X
    if np.linalg.matrix_rank(xtx) < k or np.linalg.cond(xtx) > 1e12:
        raise np.linalg.LinAlgError("singular regression design")
    xe = X * e[:, None]
    S = xe.T @ xe
    for lag in range(1, min(lags, n - 1) + 1):
        w = 1.0 - lag / (lags + 1.0)
        G = xe[lag:].T @ xe[:-lag]
        S += w * (G + G.T)
    B = np.linalg.inv(xtx)
    V = B @ S @ B
    return 0.5 * (V + V.T)


@dataclass
class CalibrationResult:
    coef: np.ndarray
    cov: np.ndarray
    stat: float
    pvalue: float


def wald_regression(y, X, lags: int = NW_LAGS) -> CalibrationResult:
    """OLS of ``y`` on ``X`` and the HAC Wald test that every coefficient is zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    V = newey_west_cov(X, y - X @ coef, lags)
    try:
        stat = float(coef @ np.linalg.solve(V, coef))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular HAC covariance") from exc
    return CalibrationResult(coef, V, stat, float(stats.chi2.sf(stat, X.shape[1])))


def _calibration_design(resid, forecast):
    return np.column_stack([np.ones(resid.size - 1), forecast[1:], resid[:-1]]), resid[1:]


def var_calibration(returns, var_forecasts, alpha: float, lags: int = NW_LAGS) -> CalibrationResult:
    r, q = _aligned(returns, var_forecasts)
    if r.size < MIN_CALIBRATION_OBS:
        raise ValueError(f"calibration test needs more than 50 observations, got {r.size}")
    u = alpha - (r <= q)
    X, y = _calibration_design(u, q)
    return wald_regression(y, X, lags)


def var_calibration_test(returns, var_forecasts, alpha: float, lags: int = NW_LAGS) -> float:
    """p-value of the VaR calibration regression."""
    return var_calibration(returns, var_forecasts, alpha, lags).pvalue


def es_calibration(returns, var_forecasts, es_forecasts, alpha: float,
                   lags: int = NW_LAGS) -> CalibrationResult:
    r, q, es = _aligned(returns, var_forecasts, es_forecasts)
    if r.size < MIN_CALIBRATION_OBS:
        raise ValueError(f"calibration test needs more than 50 observations, got {r.size}")
    if np.any(es >= 0):
        raise ScoreDomainError("ES calibration test requires ES < 0")
    e = (r <= q) * (r - es) / (alpha * np.abs(es))
    X, y = _calibration_design(e, es)
    return wald_regression(y, X, lags)


def es_calibration_test(returns, var_forecasts, es_forecasts, alpha: float,
                        lags: int = NW_LAGS) -> float:
    """p-value of the ES calibration regression."""
    return es_calibration(returns, var_forecasts, es_forecasts, alpha, lags).pvalue


# ---------------------------------------------------------------------------
# Report

def rank_markers(values: dict) -> dict:
    """1 for the best (lowest) value, 2 for the next distinct value, 0 otherwise; ties share."""
    finite = sorted({v for v in values.values() if np.isfinite(v)})
    out = {}
    for name, v in values.items():
        if finite and v == finite[0]:
            out[name] = 1
        elif len(finite) > 1 and v == finite[1]:
            out[name] = 2
        else:
            out[name] = 0
    return out


@dataclass
class BacktestReport:
    alpha: float
    models: list
    series: list
    vrate_ratio: dict  # model -> series -> VRate / alpha
    mad: dict  # model -> mean over series of |VRate - alpha|
    avg_quantile_loss: dict
    avg_joint_loss: dict
    var_pvalue: dict  # model -> series -> p-value
    es_pvalue: dict
    ranks: dict  # metric -> model -> marker
    losses: pd.DataFrame = field(repr=False, default=None)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "models": self.models, "series": self.series,
            "vrate_ratio": self.vrate_ratio, "mad": self.mad,
            "avg_quantile_loss": self.avg_quantile_loss, "avg_joint_loss": self.avg_joint_loss,
            "var_calibration_pvalue": self.var_pvalue, "es_calibration_pvalue": self.es_pvalue,
            "ranks": self.ranks, "notes": self.notes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default, **kw)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _safe_pvalue(fn, *args):
    try:
        return fn(*args)
    except (ValueError, np.linalg.LinAlgError):
        return None


def build_report(outputs: dict, returns: dict, alpha: float, dates: dict | None = None) -> BacktestReport:
    """Metrics for every model on every series.

    Parameters
    ----------
    outputs : dict
        ``{series: {model: (var, es)}}`` with arrays aligned to ``returns[series]``.
        ``es`` may be None for VaR-only models.
    returns : dict
        ``{series: realized returns}``.
    dates : dict, optional
        ``{series: dates}`` used for the per-time loss table.
    """
    check_level(alpha)
    series = list(outputs)
    models = list(dict.fromkeys(m for s in series for m in outputs[s]))
    vr, mad, aql, ajl, pv, pe = {}, {}, {}, {}, {}, {}
    frames = []
    for m in models:
        vr[m], pv[m], pe[m] = {}, {}, {}
        devs, qls, jls = [], [], []
        for s in series:
            if m not in outputs[s]:
                continue
            var, es = outputs[s][m]
            r = np.asarray(returns[s], dtype=float)
            rate = vrate(r, var)
            vr[m][s] = rate / alpha
            devs.append(abs(rate - alpha))
            ql_t = quantile_loss(r, np.asarray(var, float), alpha)
            qls.append(float(np.sum(ql_t)))
            pv[m][s] = _safe_pvalue(var_calibration_test, r, var, alpha)
            jl_t = np.full(r.size, np.nan)
            if es is not None:
                es = np.asarray(es, float)
                jl_t = al_joint_score(r, var, es, alpha)
                jls.append(float(np.sum(jl_t)))
                pe[m][s] = _safe_pvalue(es_calibration_test, r, var, es, alpha)
            d = (dates or {}).get(s, np.arange(r.size))
            frames.append(pd.DataFrame({"series": s, "date": d, "model": m, "ql": ql_t, "joint_loss": jl_t}))
        mad[m] = float(np.mean(devs))
        aql[m] = float(np.mean(qls))
        ajl[m] = float(np.mean(jls)) if jls else None
    ranks = {
        "mad": rank_markers(mad),
        "avg_quantile_loss": rank_markers(aql),
        "avg_joint_loss": rank_markers({m: v for m, v in ajl.items() if v is not None}),
    }
    notes = {"calibration_tests": CALIBRATION_LABEL, "reference_fc_wq": REFERENCE_FC_WQ,
             "mad": "mean over series of |VRate - alpha|"}
    losses = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return BacktestReport(alpha, models, series, vr, mad, aql, ajl, pv, pe, ranks, losses, notes)
