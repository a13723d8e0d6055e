"""Step 1: per-level linear combination of quantile forecasts.

For each grid level the combined predictor is ``c0 + sum_i c_i * Q_i`` with
unrestricted coefficients chosen to minimize the mean quantile loss over the
estimation window. Combined rows are then sorted across levels so they never
cross.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .optimize import (MAX_ITER, NONSMOOTH_TOL, JitObjective, OptimizationError, OptimizeProblem,
                       minimize_nonsmooth, multi_start_grid)
from .scoring import check_level


@dataclass(frozen=True)
class QuantileGrid:
    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size < 2 or not np.all(np.diff(lv) > 0) or lv[0] <= 0 or lv[-1] >= 1:
            raise ValueError("grid levels must be strictly increasing in (0, 1), at least two")
        object.__setattr__(self, "levels", lv)

    @property
    def m(self) -> int:
        return self.levels.size

    @property
    def alpha(self) -> float:
        return float(self.levels[-1])

    @property
    def eta(self) -> float:
        return float(self.levels[1] - self.levels[0])


def make_grid(alpha: float, alpha1: float, m: int) -> QuantileGrid:
    """Equally spaced levels from ``alpha1`` to ``alpha`` inclusive."""
    check_level(alpha)
    if not 0 < alpha1 < alpha:
        raise ValueError(f"need 0 < alpha1 < alpha, got alpha1={alpha1}, alpha={alpha}")
    if m < 2:
        raise ValueError("grid needs m >= 2 levels")
    eta = (alpha - alpha1) / (m - 1)
    levels = alpha1 + eta * np.arange(m)
    levels[-1] = alpha
    return QuantileGrid(levels)


@dataclass
class CombinationWeights:
    """Coefficients ``(c0, c1, ..., c_nmod)`` for one level at one origin."""

    coef: np.ndarray
    level: float
    value: float = np.nan
    converged: bool = True

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if not np.all(np.isfinite(self.coef)):
            raise ValueError("combination coefficients must be finite")


@njit(cache=True)
def _combo_loss(x, args):
    X, r, alpha = args
    n, k = X.shape
    s = 0.0
    for t in range(n):
        q = x[0]
        for i in range(k):
            q += x[i + 1] * X[t, i]
        u = r[t] - q
        if u < 0.0:
            s += u * (alpha - 1.0)
        else:
            s += u * alpha
    return s / n


def combination_objective(X, returns, alpha: float) -> JitObjective:
    """Mean quantile loss of ``[1, X] @ c`` as a function of ``c``."""
    X = np.ascontiguousarray(X, dtype=float)
    r = np.ascontiguousarray(returns, dtype=float)
    if X.ndim != 2 or X.shape[0] != r.size:
        raise ValueError(f"panel rows {X.shape} do not align with {r.size} returns")
    return JitObjective(_combo_loss, (X, r, float(alpha)))


def equal_weight_start(n_mod: int) -> np.ndarray:
    return np.concatenate([[0.0], np.full(n_mod, 1.0 / n_mod)])


def estimate_combination_weights(X, returns, alpha: float, n_random: int = 20, seed=0,
                                 start: np.ndarray | None = None, tol: float = NONSMOOTH_TOL,
                                 max_iter: int = MAX_ITER) -> CombinationWeights:
    """Minimize the window's mean quantile loss over ``(c0, c)``.

    Starts are the equal-weight vector, ``start`` when given (warm start) and
    ``n_random`` perturbations of the equal-weight vector.

    Parameters
    ----------
    X : array (N, n_mod)
        Model quantiles at level ``alpha`` over the window.
    returns : array (N,)
        Realized returns aligned with ``X``.
    """
    objective = combination_objective(X, returns, alpha)
    n_mod = objective.args[0].shape[1]
    center = equal_weight_start(n_mod)
    scale = np.concatenate([[0.5], np.full(n_mod, 1.0 / n_mod)])
    starts = multi_start_grid(center, n_random, scale, seed)
    if start is not None:
        starts.insert(1, np.asarray(start, dtype=float))
    step = np.concatenate([[0.1], np.full(n_mod, 0.1)])
    res = minimize_nonsmooth(OptimizeProblem(objective, n_mod + 1, starts), tol=tol,
                             max_iter=max_iter, step=step)
    if not np.all(np.isfinite(res.argmin)) or not np.isfinite(res.value):
        raise OptimizationError(f"combination at level {alpha} not finite", res.argmin, res.value)
    return CombinationWeights(res.argmin, float(alpha), res.value, res.converged)


def combine(row, weights) -> float | np.ndarray:
    """Intercept plus dot product; ``row`` may be one row or a stack of rows."""
    c = weights.coef if isinstance(weights, CombinationWeights) else np.asarray(weights, dtype=float)
    row = np.asarray(row, dtype=float)
    if row.shape[-1] != c.size - 1:
        raise ValueError(f"{row.shape[-1]} model forecasts but {c.size - 1} weights")
    out = c[0] + row @ c[1:]
    return float(out) if out.ndim == 0 else out


def monotonize(rows) -> np.ndarray:
    """Ascending rearrangement across levels (the last axis)."""
    return np.sort(np.asarray(rows, dtype=float), axis=-1)
