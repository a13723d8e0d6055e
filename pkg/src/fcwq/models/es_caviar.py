"""Joint VaR/ES CAViaR models estimated by minimizing the AL log score.

The quantile follows the CAViaR-AS recursion; ES is tied to it by

* additive: ``ES = Q - exp(g0)``
* multiplicative: ``ES = (1 + exp(g0)) * Q``

so ES lies below a negative VaR by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..optimize import JitObjective, OptimizationError, OptimizeProblem, minimize_nonsmooth
from .caviar import MIN_WINDOW, as_path, fit_caviar_as

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"
_RELATIONS = {ADDITIVE: 0, MULTIPLICATIVE: 1}


@njit(cache=True)
def es_from_var(q, g0, relation):
    if relation == 0:
        return q - math.exp(g0)
    return (1.0 + math.exp(g0)) * q


@njit(cache=True)
def es_caviar_objective(x, args):
    r, q0, alpha, relation = args
    if not abs(x[4]) < 50.0:
        return np.inf
    q = as_path(x[:4], r, q0)
    n = r.size
    s = 0.0
    for t in range(n):
        es = es_from_var(q[t], x[4], relation)
        if not es < 0.0 or not abs(q[t]) < 1e6:
            return np.inf
        u = r[t] - q[t]
        hit = 1.0 if u < 0.0 else 0.0
        s += -math.log((alpha - 1.0) / es) - u * (alpha - hit) / (alpha * es)
    return s / n


@dataclass
class EsCaviarFit:
    relation: str
    level: float
    betas: np.ndarray
    gamma0: float
    q0: float
    q_path: np.ndarray
    es_path: np.ndarray
    var_forecast: float
    es_forecast: float
    score: float


def fit_es_caviar(returns, alpha: float, relation: str = MULTIPLICATIVE, n_candidates: int = 10_000,
                  n_es_draws: int = 1000, n_refine: int = 3, seed: int = 0,
                  tol: float = 1e-8, max_iter: int = 5000) -> EsCaviarFit:
    """Fit ES-CAViaR-AS; VaR parameters start from a CAViaR-AS quantile fit and
    the ES parameter from the best of ``n_es_draws`` uniform draws on [-5, 2]."""
    if relation not in _RELATIONS:
        raise ValueError(f"relation must be one of {sorted(_RELATIONS)}")
    r = np.ascontiguousarray(returns, dtype=float)
    if r.size < MIN_WINDOW:
        raise ValueError(f"window of {r.size} observations; need at least {MIN_WINDOW}")
    base = fit_caviar_as(r, alpha, n_candidates=n_candidates, seed=seed)
    args = (r, base.q0, float(alpha), _RELATIONS[relation])
    objective = JitObjective(es_caviar_objective, args)
    rng = np.random.default_rng([seed, 1])
    draws = rng.uniform(-5.0, 2.0, size=n_es_draws)
    cands = [np.append(base.betas, g) for g in draws]
    losses = np.array([objective(c) for c in cands])
    order = np.argsort(np.where(np.isfinite(losses), losses, np.inf), kind="stable")[:n_refine]
    starts = [cands[i] for i in order if np.isfinite(losses[i])]
    if not starts:
        raise OptimizationError("no ES-CAViaR start with a finite score")
    res = minimize_nonsmooth(OptimizeProblem(objective, 5, starts), tol=tol, max_iter=max_iter)
    if not np.isfinite(res.value):
        raise OptimizationError("ES-CAViaR score not finite", res.argmin, res.value)
    x = res.argmin
    q = as_path(x[:4], r, base.q0)
    es = np.array([es_from_var(v, x[4], args[3]) for v in q])
    return EsCaviarFit(relation, float(alpha), x[:4].copy(), float(x[4]), base.q0, q[:-1], es[:-1],
                       float(q[-1]), float(es[-1]), res.value)
