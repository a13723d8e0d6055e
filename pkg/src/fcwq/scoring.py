"""Quantile loss and joint (VaR, ES) scoring functions.

Conventions: the violation indicator is ``r < q`` (strict), VaR and ES are
expressed in return units, and ES must be negative for the AL log score.
All functions broadcast over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_ALPHA = 0.025


class ScoreDomainError(ValueError):
    """Raised when a forecast lies outside a score's domain (e.g. ES >= 0)."""


def check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class RiskForecast:
    var: float
    es: float

    def __post_init__(self):
        if not (np.isfinite(self.var) and np.isfinite(self.es)):
            raise ValueError("VaR and ES must be finite")


def quantile_loss(r, q, alpha: float):
    """Check loss ``(alpha - I(r < q)) * (r - q)``; non-negative."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    u = r - q
    out = u * (alpha - (u < 0))
    return out if out.ndim else float(out)


def al_joint_score(r, var, es, alpha: float):
    """Asymmetric-Laplace log score for the pair (VaR, ES).

    ``-log((alpha - 1) / es) - (r - var) * (alpha - I(r < var)) / (alpha * es)``
    """
    r = np.asarray(r, dtype=float)
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    if np.any(es >= 0):
        raise ScoreDomainError("AL score requires ES < 0")
    u = r - var
    out = -np.log((alpha - 1.0) / es) - u * (alpha - (u < 0)) / (alpha * es)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FZFamily:
    """Choice functions of the Fissler-Ziegel class.

    ``g1`` increasing; ``g2`` strictly increasing and convex with ``g2 = h'``
    and ``g2(x) -> 0`` as ``x -> -inf``; ``a`` a function of the return only.
    """

    g1: Callable
    g2: Callable
    h: Callable
    a: Callable


def al_family(alpha: float) -> FZFamily:
    const = 1.0 - np.log(1.0 - alpha)

    def g2(x):
        x = np.asarray(x, dtype=float)
        if np.any(x >= 0):
            raise ScoreDomainError("G2(x) = -1/x needs x < 0")
        return -1.0 / x

    def h(x):
        x = np.asarray(x, dtype=float)
        if np.any(x >= 0):
            raise ScoreDomainError("H(x) = -log(-x) needs x < 0")
        return -np.log(-x)

    return FZFamily(
        g1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        g2=g2,
        h=h,
        a=lambda r: np.full_like(np.asarray(r, dtype=float), const),
    )


def fz_score(r, var, es, alpha: float, family: FZFamily):
    """General Fissler-Ziegel joint score.

    With :func:`al_family` this differs from :func:`al_joint_score` by
    ``r / es``, a term that does not depend on VaR and has zero expectation
    when returns have zero conditional mean.
    """
    r = np.asarray(r, dtype=float)
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    hit = (r < var).astype(float)
    out = (
        (hit - alpha) * family.g1(var)
        - hit * family.g1(r)
        + family.g2(es) * (es - var + hit * (var - r) / alpha)
        - family.h(es)
        + family.a(r)
    )
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def mean_score(scores) -> float:
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("cannot average an empty score series")
    return float(scores.mean())
