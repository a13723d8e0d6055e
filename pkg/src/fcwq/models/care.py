"""CARE with asymmetric slope: conditional expectiles fitted by asymmetric least squares.

The expectile recursion has the CAViaR-AS form. For a target level ``alpha``
the expectile level ``tau`` is chosen on a grid in ``(0, alpha]`` so that the
in-sample violation rate of the expectile path is closest to ``alpha``.
ES is the expectile forecast scaled by the in-sample ratio of the mean
violating return to the mean expectile on violation days.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from ..optimize import JitObjective, OptimizationError, OptimizeProblem, minimize_nonsmooth
from .caviar import INIT_OBS, MIN_WINDOW, as_path, caviar_center

_PATH_CAP = 1e6


def als_loss(r, mu, tau: float) -> float:
    """Asymmetric least squares ``sum |tau - I(r < mu)| * (r - mu)**2``."""
    r = np.asarray(r, dtype=float)
    u = r - np.asarray(mu, dtype=float)
    return float(np.sum(np.abs(tau - (u < 0)) * u * u))


def sample_expectile(r, tau: float) -> float:
    """Minimizer of :func:`als_loss` over a constant ``mu``."""
    r = np.asarray(r, dtype=float)

    def foc(m):
        u = r - m
        return float(np.sum(np.abs(tau - (u < 0)) * u))

    return float(brentq(foc, r.min() - 1.0, r.max() + 1.0, xtol=1e-14))


@njit(cache=True)
def care_objective(x, args):
    r, mu0, tau = args
    mu = as_path(x, r, mu0)
    n = r.size
    s = 0.0
    for t in range(n):
        if not abs(mu[t]) < _PATH_CAP:
            return np.inf
        u = r[t] - mu[t]
        w = 1.0 - tau if u < 0.0 else tau
        s += w * u * u
    return s / n


@dataclass
class CareFit:
    level: float
    tau_star: float
    betas: np.ndarray
    mu0: float
    mu_path: np.ndarray
    var_forecast: float
    es_forecast: float
    vrate: float
    es_ratio: float

    @property
    def es_path(self) -> np.ndarray:
        return self.es_ratio * self.mu_path

    def replay(self, r) -> np.ndarray:
        return as_path(self.betas, np.ascontiguousarray(r, dtype=float), self.mu0)


def select_tau(taus, vrates, alpha: float) -> int:
    """Index of the violation rate closest to ``alpha``; ties go to the smaller tau."""
    taus = np.asarray(taus, dtype=float)
    dist = np.abs(np.asarray(vrates, dtype=float) - alpha)
    best = None
    for i in np.argsort(taus, kind="stable"):
        if best is None or dist[i] < dist[best]:
            best = i
    return int(best)


def _fit_expectile(r, tau, start, tol, max_iter):
    mu0 = sample_expectile(r[:INIT_OBS], tau)
    starts = [caviar_center(r, mu0)]
    if start is not None:
        starts.insert(0, start)
    res = minimize_nonsmooth(OptimizeProblem(JitObjective(care_objective, (r, mu0, float(tau))), 4, starts),
                             tol=tol, max_iter=max_iter)
    if not np.isfinite(res.value):
        raise OptimizationError(f"CARE ALS not finite at tau={tau}", res.argmin, res.value)
    return res.argmin, mu0, as_path(res.argmin, r, mu0)


def fit_care_as(returns, alpha: float, grid_size: int = 100, search: str = "grid",
                start: np.ndarray | None = None, tol: float = 1e-9, max_iter: int = 5000) -> CareFit:
    """Fit CARE-AS and tune the expectile level.

    ``search="grid"`` fits every grid level; ``"bisect"`` bisects on the grid
    index assuming the violation rate increases with tau (a faster variant).
    """
    r = np.ascontiguousarray(returns, dtype=float)
    if r.size < MIN_WINDOW:
        raise ValueError(f"window of {r.size} observations; need at least {MIN_WINDOW}")
    taus = alpha * np.arange(1, grid_size + 1) / grid_size
    fits: dict[int, tuple] = {}
    prev = None if start is None else np.asarray(start, dtype=float)

    def evaluate(k):
        nonlocal prev
        if k not in fits:
            betas, mu0, path = _fit_expectile(r, taus[k], prev, tol, max_iter)
            prev = betas
            fits[k] = (betas, mu0, path, float(np.mean(r < path[:-1])))
        return fits[k][3]

    if search == "grid":
        for k in range(grid_size - 1, -1, -1):
            evaluate(k)
    elif search == "bisect":
        lo, hi = 0, grid_size - 1
        if evaluate(hi) > alpha and evaluate(lo) < alpha:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if evaluate(mid) < alpha:
                    lo = mid
                else:
                    hi = mid
    else:
        raise ValueError(f"unknown search {search!r}")
    keys = sorted(fits)
    vrates = [fits[k][3] for k in keys]
    if max(vrates) == 0.0:
        raise OptimizationError("no expectile level produces any violation")
    k = keys[select_tau(taus[keys], vrates, alpha)]
    betas, mu0, path, vrate = fits[k]
    mu = path[:-1]
    hit = r < mu
    if not hit.any():
        raise OptimizationError("selected expectile has no violations")
    ratio = float(r[hit].mean() / mu[hit].mean())
    return CareFit(float(alpha), float(taus[k]), betas, mu0, mu, float(path[-1]),
                   float(ratio * path[-1]), vrate, ratio)
