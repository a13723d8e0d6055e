"""CAViaR with asymmetric slope, estimated by quantile regression.

``Q[t] = b0 + b1 * Q[t-1] + (b2 * I(r[t-1] >= 0) + b3 * I(r[t-1] < 0)) * |r[t-1]|``

``Q[0]`` is the empirical quantile of the first 100 observations. Parameters
come from the best of many random candidates, refined by Nelder-Mead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..optimize import JitObjective, OptimizationError, OptimizeProblem, minimize_nonsmooth, multi_start_grid

MIN_WINDOW = 250
INIT_OBS = 100
_PATH_CAP = 1e6


@njit(cache=True)
def as_path(beta, r, q0):
    """Asymmetric-slope recursion for ``t = 0 .. n`` (last entry is the forecast)."""
    n = r.size
    q = np.empty(n + 1)
    q[0] = q0
    for t in range(1, n + 1):
        e = r[t - 1]
        if e >= 0.0:
            slope = beta[2] * e
        else:
            slope = -beta[3] * e
        q[t] = beta[0] + beta[1] * q[t - 1] + slope
    return q


@njit(cache=True)
def _ql_mean(r, q, alpha):
    n = r.size
    s = 0.0
    for t in range(n):
        if not abs(q[t]) < _PATH_CAP:
            return np.inf
        u = r[t] - q[t]
        if u < 0.0:
            s += u * (alpha - 1.0)
        else:
            s += u * alpha
    return s / n


@njit(cache=True)
def caviar_objective(x, args):
    r, q0, alpha = args
    return _ql_mean(r, as_path(x, r, q0), alpha)


@njit(cache=True)
def _candidate_losses(cands, r, q0, alpha):
    out = np.empty(cands.shape[0])
    for i in range(cands.shape[0]):
        out[i] = _ql_mean(r, as_path(cands[i], r, q0), alpha)
    return out


def initial_quantile(r, alpha: float) -> float:
    return float(np.quantile(np.asarray(r)[:INIT_OBS], alpha))


def caviar_center(r, q0: float) -> np.ndarray:
    b1, b2, b3 = 0.9, -0.1, -0.3
    b0 = (1 - b1) * q0 - 0.5 * (b2 + b3) * float(np.mean(np.abs(r)))
    return np.array([b0, b1, b2, b3])


def caviar_scale(center: np.ndarray) -> np.ndarray:
    return np.array([max(2 * abs(center[0]), 0.2), 0.15, 0.3, 0.5])


@dataclass
class CaviarFit:
    level: float
    betas: np.ndarray
    q0: float
    q_path: np.ndarray
    q_forecast: float
    loss: float
    converged: bool

    def replay(self, r) -> np.ndarray:
        return as_path(self.betas, np.ascontiguousarray(r, dtype=float), self.q0)


def best_candidates(objective_many, center, scale, n_candidates: int, n_best: int, seed: int):
    cands = np.asarray(multi_start_grid(center, n_candidates - 1, scale, seed))
    losses = objective_many(cands)
    losses = np.where(np.isfinite(losses), losses, np.inf)
    order = np.argsort(losses, kind="stable")[:n_best]
    return [cands[i] for i in order if np.isfinite(losses[i])]


def fit_caviar_as(returns, alpha: float, n_candidates: int = 10_000, n_refine: int = 10,
                  seed: int = 0, start: np.ndarray | None = None, tol: float = 1e-7,
                  max_iter: int = 5000) -> CaviarFit:
    """Quantile-regression fit of CAViaR-AS at level ``alpha``.

    With ``start`` (e.g. the previous window's betas) the random candidate search
    is skipped and the simplex starts from ``start`` and the default center.
    """
    r = np.ascontiguousarray(returns, dtype=float)
    if r.size < MIN_WINDOW:
        raise ValueError(f"window of {r.size} observations; need at least {MIN_WINDOW}")
    q0 = initial_quantile(r, alpha)
    center = caviar_center(r, q0)
    objective = JitObjective(caviar_objective, (r, q0, float(alpha)))
    if start is not None:
        starts = [np.asarray(start, dtype=float), center]
    else:
        starts = best_candidates(lambda c: _candidate_losses(c, r, q0, float(alpha)), center,
                                 caviar_scale(center), n_candidates, n_refine, seed)
    res = minimize_nonsmooth(OptimizeProblem(objective, 4, starts), tol=tol, max_iter=max_iter)
    if not np.isfinite(res.value):
        raise OptimizationError("CAViaR loss not finite", res.argmin, res.value)
    path = as_path(res.argmin, r, q0)
    if np.any(path[:-1] >= 0) and alpha < 0.5:
        warnings.warn(f"CAViaR level-{alpha} path has non-negative values", RuntimeWarning, stacklevel=2)
    return CaviarFit(float(alpha), res.argmin, q0, path[:-1], float(path[-1]), res.value, res.converged)
