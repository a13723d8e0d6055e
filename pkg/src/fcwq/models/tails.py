"""Error-distribution tails for volatility models.

Each estimator returns per-level multipliers ``q`` (quantile) and ``c`` (tail
mean) of the standardized residual; VaR and ES follow by scaling with the
volatility forecast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..optimize import OptimizationError, OptimizeProblem, minimize_smooth
from ..tdist import std_t_es, std_t_ppf
from .garch import GarchFit

MIN_EXCEEDANCES = 30


class TailError(ValueError):
    """Raised when a tail estimate is undefined for the given sample."""


@dataclass
class TailFit:
    method: str
    levels: np.ndarray
    q: np.ndarray
    c: np.ndarray
    xi: float | None = None
    beta_gpd: float | None = None
    threshold: float | None = None
    n_exceed: int | None = None

    def var_es(self, sigma):
        """VaR and ES for volatility ``sigma`` (scalar or vector), shape ``(..., M)``."""
        s = np.asarray(sigma, dtype=float)[..., None]
        return s * self.q, s * self.c


def parametric_tail(nu: float, levels) -> TailFit:
    levels = np.asarray(levels, dtype=float)
    return TailFit("parametric-t", levels, std_t_ppf(levels, nu), std_t_es(levels, nu))


def parametric_var_es(fit: GarchFit, levels) -> tuple[np.ndarray, np.ndarray]:
    """One-step VaR and ES under the fitted unit-variance Student-t errors."""
    return parametric_tail(fit.nu, levels).var_es(fit.sigma_forecast)


# ---------------------------------------------------------------------------
# Peaks over threshold

def gpd_tail_quantile(u: float, xi: float, beta: float, ratio):
    """Loss quantile ``u + beta / xi * (ratio**-xi - 1)`` with ``ratio = n p / n_u``.

    The ``xi -> 0`` limit ``u - beta * log(ratio)`` is used below ``|xi| < 1e-12``.
    """
    lr = np.log(np.asarray(ratio, dtype=float))
    if abs(xi) < 1e-12:
        return u - beta * lr
    return u + beta * np.expm1(-xi * lr) / xi


def _gpd_negloglik(x, excess):
    beta = math.exp(x[0])
    xi = x[1]
    if abs(xi) < 1e-12:
        return math.log(beta) + float(np.mean(excess)) / beta
    arg = 1.0 + xi * excess / beta
    if np.any(arg <= 0):
        return np.inf
    return math.log(beta) + (1.0 + 1.0 / xi) * float(np.mean(np.log(arg)))


def fit_gpd(excess) -> tuple[float, float]:
    """Maximum-likelihood GPD ``(xi, beta)`` for positive exceedances."""
    excess = np.asarray(excess, dtype=float)
    start = np.array([math.log(excess.mean()), 0.1])
    res = minimize_smooth(OptimizeProblem(lambda x: _gpd_negloglik(x, excess), 2, [start]))
    if not np.isfinite(res.value):
        raise OptimizationError("GPD likelihood not finite", res.argmin, res.value)
    return float(res.argmin[1]), float(math.exp(res.argmin[0]))


def pot_from_residuals(z, levels, threshold_frac: float = 0.1) -> TailFit:
    z = np.asarray(z, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if not 0.05 < threshold_frac <= 0.2:
        raise TailError(f"threshold fraction {threshold_frac} outside (0.05, 0.2]")
    n = z.size
    losses = -z
    u = float(np.quantile(losses, 1.0 - threshold_frac))
    excess = losses[losses > u] - u
    n_u = excess.size
    if n_u < MIN_EXCEEDANCES:
        raise TailError(f"only {n_u} exceedances; need at least {MIN_EXCEEDANCES}")
    if np.any(levels >= n_u / n):
        raise TailError("tail level not below the exceedance fraction")
    xi, beta = fit_gpd(excess)
    if xi >= 1.0:
        raise TailError(f"GPD shape {xi:.3f} >= 1: tail mean is infinite")
    var_loss = gpd_tail_quantile(u, xi, beta, n * levels / n_u)
    es_loss = (var_loss + beta - xi * u) / (1.0 - xi)
    return TailFit("POT", levels, -var_loss, -es_loss, xi, beta, u, n_u)


def pot_tail(fit: GarchFit, levels, threshold_frac: float = 0.1) -> TailFit:
    """GPD fitted to the left-tail exceedances of the fit's standardized residuals."""
    return pot_from_residuals(fit.std_resid, levels, threshold_frac)


# ---------------------------------------------------------------------------
# Filtered historical simulation

def fhs_from_residuals(z, levels) -> TailFit:
    """Empirical quantile ``z_(k)`` with ``k = ceil(n * alpha)`` and the mean of the k smallest."""
    z = np.sort(np.asarray(z, dtype=float))
    levels = np.asarray(levels, dtype=float)
    n = z.size
    k = np.ceil(n * levels - 1e-9).astype(int)
    if k.min() < 2:
        raise TailError(f"fewer than 2 observations at or below the level-{levels.min()} quantile")
    csum = np.cumsum(z)
    q = z[k - 1]
    c = csum[k - 1] / k
    return TailFit("FHS", levels, q, c)


def fhs_tail(fit: GarchFit, levels) -> TailFit:
    return fhs_from_residuals(fit.std_resid, levels)
