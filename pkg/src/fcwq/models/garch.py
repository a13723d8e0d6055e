"""GJR-GARCH(1,1)-t and EGARCH(1,1)-t with zero mean, fitted by Student-t QML.

Recursions (``z = r / sigma``):

* GJR: ``s2[t] = omega + (alpha + gamma * I(r[t-1] < 0)) * r[t-1]**2 + beta * s2[t-1]``
* EGARCH: ``ln s2[t] = omega + beta * ln s2[t-1] + alpha * (|z[t-1]| - E|z|) + gamma * z[t-1]``

Both start from the window's sample variance. Optimization runs on an
unconstrained parameter vector; see ``_gjr_unpack`` / ``_egarch_unpack``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..optimize import OptimizationError, OptimizeProblem, minimize_smooth

GJR = "GJR"
EGARCH = "EGARCH"
MIN_WINDOW = 250
NU_MAX = 500.0
_LOG_S2_CAP = 60.0


@njit(cache=True)
def _lgamma(x):
    return math.lgamma(x)


@njit(cache=True)
def gjr_variance(omega, alpha, gamma, beta, r, s2_0):
    """Conditional variances for ``t = 0 .. n`` (last entry is the forecast)."""
    n = r.size
    s2 = np.empty(n + 1)
    s2[0] = s2_0
    for t in range(1, n + 1):
        e = r[t - 1]
        a = alpha + gamma if e < 0.0 else alpha
        s2[t] = omega + a * e * e + beta * s2[t - 1]
    return s2


@njit(cache=True)
def egarch_variance(omega, alpha, gamma, beta, r, s2_0, abs_mean):
    n = r.size
    s2 = np.empty(n + 1)
    ls = math.log(s2_0)
    s2[0] = s2_0
    for t in range(1, n + 1):
        z = r[t - 1] / math.sqrt(s2[t - 1])
        ls = omega + beta * ls + alpha * (abs(z) - abs_mean) + gamma * z
        if ls > _LOG_S2_CAP or ls < -_LOG_S2_CAP:
            s2[t] = np.nan
            for k in range(t + 1, n + 1):
                s2[k] = np.nan
            return s2
        s2[t] = math.exp(ls)
    return s2


@njit(cache=True)
def _t_negloglik(r, s2, nu):
    n = r.size
    const = _lgamma((nu + 1.0) / 2.0) - _lgamma(nu / 2.0) - 0.5 * math.log(math.pi * (nu - 2.0))
    total = 0.0
    for t in range(n):
        v = s2[t]
        if not (v > 0.0) or not np.isfinite(v):
            return np.inf
        total += const - 0.5 * math.log(v) - (nu + 1.0) / 2.0 * math.log1p(r[t] * r[t] / (v * (nu - 2.0)))
    return -total / n


@njit(cache=True)
def _logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    p = min(max(p, 1e-8), 1.0 - 1e-8)
    return math.log(p / (1.0 - p))


@njit(cache=True)
def _nu_unpack(x):
    return 2.0 + (NU_MAX - 2.0) * _logistic(x)


@njit(cache=True)
def _gjr_unpack(x):
    # persistence P = alpha + gamma/2 + beta in (0, 1); beta = s * P; the
    # remaining (1 - s) * P is the average ARCH effect, split between alpha
    # and alpha + gamma by k
    omega = math.exp(x[0])
    k = _logistic(x[1])
    s = _logistic(x[2])
    pers = _logistic(x[3])
    arch = (1.0 - s) * pers
    alpha = 2.0 * arch * k
    gamma = 2.0 * arch * (1.0 - k) - alpha
    beta = s * pers
    return omega, alpha, gamma, beta, _nu_unpack(x[4])


@njit(cache=True)
def _gjr_objective(x, r, s2_0):
    for v in x:
        if not np.isfinite(v) or abs(v) > 40.0:
            return np.inf
    omega, alpha, gamma, beta, nu = _gjr_unpack(x)
    s2 = gjr_variance(omega, alpha, gamma, beta, r, s2_0)
    return _t_negloglik(r, s2[:-1], nu)


@njit(cache=True)
def _egarch_unpack(x):
    return x[0], x[1], x[2], math.tanh(x[3]), _nu_unpack(x[4])


@njit(cache=True)
def _std_t_abs_mean(nu):
    return 2.0 * math.sqrt(nu - 2.0) / (nu - 1.0) * math.exp(
        _lgamma((nu + 1.0) / 2.0) - _lgamma(nu / 2.0)) / math.sqrt(math.pi)


@njit(cache=True)
def _egarch_objective(x, r, s2_0):
    for v in x:
        if not np.isfinite(v) or abs(v) > 40.0:
            return np.inf
    omega, alpha, gamma, beta, nu = _egarch_unpack(x)
    s2 = egarch_variance(omega, alpha, gamma, beta, r, s2_0, _std_t_abs_mean(nu))
    return _t_negloglik(r, s2[:-1], nu)


@dataclass
class GarchFit:
    kind: str
    params: np.ndarray  # omega, alpha, gamma, beta
    nu: float
    sigma_path: np.ndarray
    sigma_forecast: float
    s2_0: float
    loglik: float
    converged: bool
    raw: np.ndarray
    returns: np.ndarray

    @property
    def std_resid(self) -> np.ndarray:
        return self.returns / self.sigma_path

    def variance_path(self, r: np.ndarray) -> np.ndarray:
        """Replay the fitted recursion over ``r``; returns ``len(r) + 1`` variances."""
        omega, alpha, gamma, beta = self.params
        if self.kind == GJR:
            return gjr_variance(omega, alpha, gamma, beta, np.asarray(r, float), self.s2_0)
        return egarch_variance(omega, alpha, gamma, beta, np.asarray(r, float), self.s2_0,
                               _std_t_abs_mean(self.nu))


def _to_raw(kind: str, params, nu: float) -> np.ndarray:
    omega, alpha, gamma, beta = params
    x_nu = _logit((nu - 2.0) / (NU_MAX - 2.0))
    if kind == GJR:
        arch = alpha + 0.5 * gamma
        pers = arch + beta
        return np.array([math.log(omega), _logit(alpha / (2.0 * arch)), _logit(beta / pers),
                         _logit(pers), x_nu])
    return np.array([omega, alpha, gamma, math.atanh(beta), x_nu])


def default_start(kind: str, variance: float) -> np.ndarray:
    if kind == GJR:
        return _to_raw(GJR, (0.05 * variance, 0.05, 0.10, 0.85), 8.0)
    beta = 0.95
    return _to_raw(EGARCH, ((1 - beta) * math.log(variance), 0.15, -0.08, beta), 8.0)


def fit_garch(returns, kind: str = GJR, start: np.ndarray | None = None,
              tol: float = 1e-8, max_iter: int = 5000) -> GarchFit:
    """Student-t QML fit of a zero-mean GJR or EGARCH model to one window.

    ``start`` is an unconstrained parameter vector (``GarchFit.raw`` of an
    earlier fit) used for warm starts; the default start is used otherwise.
    """
    r = np.ascontiguousarray(returns, dtype=float)
    if r.size < MIN_WINDOW:
        raise ValueError(f"window of {r.size} observations; need at least {MIN_WINDOW}")
    if kind not in (GJR, EGARCH):
        raise ValueError(f"unknown GARCH kind {kind!r}")
    s2_0 = float(np.var(r))
    objective = _gjr_objective if kind == GJR else _egarch_objective
    starts = [default_start(kind, s2_0)] if start is None else [np.asarray(start, float)]
    problem = OptimizeProblem(lambda x: objective(x, r, s2_0), 5, starts)
    res = minimize_smooth(problem, tol=tol, max_iter=max_iter)
    if not np.isfinite(res.value):
        raise OptimizationError(f"{kind} likelihood not finite", res.argmin, res.value)
    if not res.converged:
        raise OptimizationError(f"{kind} QML did not converge", res.argmin, res.value)
    unpack = _gjr_unpack if kind == GJR else _egarch_unpack
    omega, alpha, gamma, beta, nu = unpack(res.argmin)
    params = np.array([omega, alpha, gamma, beta])
    if kind == GJR:
        s2 = gjr_variance(omega, alpha, gamma, beta, r, s2_0)
    else:
        s2 = egarch_variance(omega, alpha, gamma, beta, r, s2_0, _std_t_abs_mean(nu))
    fit = GarchFit(kind, params, nu, np.sqrt(s2[:-1]), float(math.sqrt(s2[-1])), s2_0,
                   -res.value * r.size, res.converged, res.argmin.copy(), r)
    return fit
