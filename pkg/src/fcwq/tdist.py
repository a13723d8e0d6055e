"""Unit-variance Student-t distribution: quantiles, tail means, density.

The standardized variable is ``z = T * sqrt((nu - 2) / nu)`` with ``T ~ t_nu``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not nu > 2.0:
        raise ValueError(f"degrees of freedom must exceed 2, got {nu}")
    return nu


def std_t_ppf(p, nu: float):
    nu = _check_nu(nu)
    return special.stdtrit(nu, np.asarray(p, dtype=float)) * math.sqrt((nu - 2.0) / nu)


def std_t_cdf(x, nu: float):
    nu = _check_nu(nu)
    return special.stdtr(nu, np.asarray(x, dtype=float) / math.sqrt((nu - 2.0) / nu))


def std_t_logpdf(x, nu: float):
    nu = _check_nu(nu)
    x = np.asarray(x, dtype=float)
    const = (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
             - 0.5 * math.log(math.pi * (nu - 2.0)))
    return const - (nu + 1) / 2 * np.log1p(x * x / (nu - 2.0))


def std_t_es(p, nu: float):
    """Lower-tail mean ``E[z | z <= q_p]`` of the unit-variance t.

    For ``T ~ t_nu`` with ``t_p`` its p-quantile,
    ``E[T | T <= t_p] = -(nu + t_p**2) / (nu - 1) * f_nu(t_p) / p``.
    """
    nu = _check_nu(nu)
    p = np.asarray(p, dtype=float)
    tp = special.stdtrit(nu, p)
    dens = np.exp(special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
                  - 0.5 * math.log(nu * math.pi) - (nu + 1) / 2 * np.log1p(tp * tp / nu))
    es_t = -(nu + tp * tp) / (nu - 1.0) * dens / p
    return es_t * math.sqrt((nu - 2.0) / nu)


def std_t_abs_mean(nu: float) -> float:
    """``E|z|`` for the unit-variance t."""
    nu = _check_nu(nu)
    return float(2.0 * math.sqrt(nu - 2.0) / (nu - 1.0)
                 * math.exp(special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)) / math.sqrt(math.pi))


def std_t_rvs(nu: float, size, rng: np.random.Generator) -> np.ndarray:
    nu = _check_nu(nu)
    return rng.standard_t(nu, size=size) * math.sqrt((nu - 2.0) / nu)
