"""Step 2: expected shortfall as a Beta-weighted average of combined quantiles.

``ES = w0 + sum_j w_j * Q_j`` where ``w_j`` is the Beta(a, b) density at
``j / (M + 1)`` normalized to unit sum. ``(w0, log a, log b)`` is fitted by
minimizing the window's mean AL score with the combined quantile at the target
level playing the VaR role.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from .optimize import (MAX_ITER, SMOOTH_TOL, JitObjective, OptimizationError, OptimizeProblem,
                       minimize_smooth, multi_start_grid)
from .scoring import check_level

_LOG_PARAM_CAP = 50.0


def beta_density(x, a: float, b: float):
    """Beta(a, b) density at ``x`` in (0, 1)."""
    x = np.asarray(x, dtype=float)
    logc = special.gammaln(a + b) - special.gammaln(a) - special.gammaln(b)
    return np.exp(logc + (a - 1) * np.log(x) + (b - 1) * np.log1p(-x))


def beta_points(m: int) -> np.ndarray:
    return np.arange(1, m + 1) / (m + 1)


def beta_weights(a: float, b: float, m: int) -> np.ndarray:
    """Beta density at ``j / (m + 1)``, ``j = 1..m``, normalized to sum to one."""
    if not (a > 0 and b > 0):
        raise ValueError(f"Beta parameters must be positive, got a={a}, b={b}")
    if m < 2:
        raise ValueError("need m >= 2")
    x = beta_points(m)
    logw = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x)
    w = np.exp(logw - logw.max())
    return w / w.sum()


@dataclass
class WqParams:
    w0: float
    a: float
    b: float
    value: float = np.nan
    converged: bool = True

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if not all(math.isfinite(v) for v in (self.w0, self.a, self.b)):
            raise ValueError("WQ parameters must be finite")

    @classmethod
    def from_raw(cls, x, value: float = np.nan, converged: bool = True) -> "WqParams":
        return cls(float(x[0]), float(math.exp(x[1])), float(math.exp(x[2])), value, converged)

    @property
    def raw(self) -> np.ndarray:
        return np.array([self.w0, math.log(self.a), math.log(self.b)])

    def weights(self, m: int) -> np.ndarray:
        return beta_weights(self.a, self.b, m)


def es_from_weights(row, w0: float, weights) -> float | np.ndarray:
    """``w0 + row @ weights`` for one combined row or a stack of rows."""
    out = w0 + np.asarray(row, dtype=float) @ np.asarray(weights, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def simple_average_es(row) -> float | np.ndarray:
    out = np.mean(np.asarray(row, dtype=float), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@njit(cache=True)
def _wq_score(x, args):
    Qc, r, alpha, logx, log1mx = args
    if not (abs(x[1]) < _LOG_PARAM_CAP and abs(x[2]) < _LOG_PARAM_CAP):
        return np.inf
    a = math.exp(x[1])
    b = math.exp(x[2])
    n, m = Qc.shape
    lw = np.empty(m)
    top = -np.inf
    for j in range(m):
        lw[j] = (a - 1.0) * logx[j] + (b - 1.0) * log1mx[j]
        if lw[j] > top:
            top = lw[j]
    tot = 0.0
    for j in range(m):
        lw[j] = math.exp(lw[j] - top)
        tot += lw[j]
    s = 0.0
    for t in range(n):
        es = x[0]
        for j in range(m):
            es += lw[j] / tot * Qc[t, j]
        if not es < 0.0:
            return np.inf
        q = Qc[t, m - 1]
        u = r[t] - q
        hit = 1.0 if u < 0.0 else 0.0
        s += -math.log((alpha - 1.0) / es) - u * (alpha - hit) / (alpha * es)
    return s / n


def wq_objective(combined, returns, alpha: float) -> JitObjective:
    """Mean AL score of the WQ forecasts as a function of ``(w0, log a, log b)``."""
    Qc = np.ascontiguousarray(combined, dtype=float)
    r = np.ascontiguousarray(returns, dtype=float)
    if Qc.ndim != 2 or Qc.shape[0] != r.size:
        raise ValueError(f"combined paths {Qc.shape} do not align with {r.size} returns")
    x = beta_points(Qc.shape[1])
    return JitObjective(_wq_score, (Qc, r, float(check_level(alpha)), np.log(x), np.log1p(-x)))


def estimate_wq_params(combined, returns, alpha: float, n_random: int = 10, seed=0,
                       start: WqParams | None = None, tol: float = SMOOTH_TOL,
                       max_iter: int = MAX_ITER) -> WqParams:
    """Fit ``(w0, a, b)`` on a window of monotonized combined quantiles.

    Starts are ``(0, 1, 1)``, the previous estimate when ``start`` is given and
    ``n_random`` draws around the center in ``(w0, log a, log b)``. Points
    where any ES is non-negative score ``+inf``.

    Raises
    ------
    OptimizationError
        If no start is feasible or the best run does not converge.
    """
    objective = wq_objective(combined, returns, alpha)
    starts = multi_start_grid(np.zeros(3), n_random, np.array([0.5, 1.5, 1.5]), seed)
    if start is not None:
        starts.insert(1, start.raw)
    res = minimize_smooth(OptimizeProblem(objective, 3, starts), tol=tol, max_iter=max_iter)
    if not np.isfinite(res.value):
        raise OptimizationError("WQ score not finite", res.argmin, res.value)
    if not res.converged:
        raise OptimizationError("WQ estimation did not converge", res.argmin, res.value)
    return WqParams.from_raw(res.argmin, res.value, res.converged)
