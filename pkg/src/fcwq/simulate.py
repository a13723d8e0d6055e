"""Synthetic return series with known conditional VaR and ES.

Returns are ``r[t] = sigma[t] * z[t]`` with ``z`` unit-variance Student-t.
Because ``sigma[t]`` depends only on returns up to ``t - 1``, the true
conditional VaR and ES at every level are ``sigma[t]`` times the standardized
t quantile and tail mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .data import ReturnSeries
from .tdist import std_t_abs_mean, std_t_es, std_t_ppf, std_t_rvs

GJR_T = "gjr-t"
EGARCH_T = "egarch-t"
IID_T = "iid-t"

DEFAULT_PARAMS = {
    GJR_T: {"omega": 0.02, "alpha": 0.05, "gamma": 0.10, "beta": 0.88, "nu": 8.0},
    EGARCH_T: {"omega": 0.0, "alpha": 0.12, "gamma": -0.07, "beta": 0.97, "nu": 8.0},
    IID_T: {"scale": 1.0, "nu": 5.0},
}

START_DATE = "2000-01-03"


@dataclass(frozen=True)
class Dgp:
    """Data-generating process; missing parameters take the kind's defaults."""

    kind: str = GJR_T
    params: dict = field(default_factory=dict)
    seed: int = 0
    length: int = 3000
    burn: int = 500

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in DEFAULT_PARAMS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; choose from {sorted(DEFAULT_PARAMS)}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[kind])
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)} for {kind}")
        p = {**DEFAULT_PARAMS[kind], **self.params}
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", p)
        if self.length < 1 or self.burn < 0:
            raise ValueError("length must be positive and burn non-negative")
        if not p["nu"] > 2:
            raise ValueError("nu must exceed 2")
        if kind == GJR_T:
            if min(p["omega"], p["alpha"], p["beta"]) <= 0 or p["alpha"] + p["gamma"] < 0:
                raise ValueError("GJR needs omega, alpha, beta > 0 and alpha + gamma >= 0")
            if p["alpha"] + p["gamma"] / 2 + p["beta"] >= 1:
                raise ValueError("GJR persistence alpha + gamma/2 + beta must be below 1")
        elif kind == EGARCH_T:
            if not abs(p["beta"]) < 1:
                raise ValueError("EGARCH needs |beta| < 1")
        elif not p["scale"] > 0:
            raise ValueError("iid scale must be positive")


@dataclass
class SimulationResult:
    series: ReturnSeries
    sigma: np.ndarray
    levels: np.ndarray
    var: np.ndarray  # (T, M)
    es: np.ndarray  # (T, M)

    def to_frame(self) -> pd.DataFrame:
        df = self.series.to_frame()
        df["sigma"] = self.sigma
        for j, a in enumerate(self.levels):
            df[f"var_{a:g}"] = self.var[:, j]
            df[f"es_{a:g}"] = self.es[:, j]
        return df


def _sigma_path(dgp: Dgp, z: np.ndarray) -> np.ndarray:
    p = dgp.params
    n = z.size
    sigma = np.empty(n)
    if dgp.kind == IID_T:
        sigma[:] = p["scale"]
        return sigma
    if dgp.kind == GJR_T:
        s2 = p["omega"] / (1 - p["alpha"] - p["gamma"] / 2 - p["beta"])
        for t in range(n):
            sigma[t] = math.sqrt(s2)
            r = sigma[t] * z[t]
            s2 = p["omega"] + (p["alpha"] + p["gamma"] * (r < 0)) * r * r + p["beta"] * s2
        return sigma
    ez = std_t_abs_mean(p["nu"])
    ls = p["omega"] / (1 - p["beta"])
    for t in range(n):
        sigma[t] = math.exp(0.5 * ls)
        ls = p["omega"] + p["beta"] * ls + p["alpha"] * (abs(z[t]) - ez) + p["gamma"] * z[t]
    return sigma


def simulate(dgp: Dgp, levels=(0.025,)) -> SimulationResult:
    """Simulate ``dgp.length`` returns after ``dgp.burn`` discarded draws."""
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie in (0, 1)")
    rng = np.random.default_rng(dgp.seed)
    nu = dgp.params["nu"]
    z = std_t_rvs(nu, dgp.length + dgp.burn, rng)
    sigma = _sigma_path(dgp, z)[dgp.burn:]
    r = sigma * z[dgp.burn:]
    # day resolution keeps very long series clear of the nanosecond range limit
    dates = np.busday_offset(np.datetime64(START_DATE, "D"), np.arange(dgp.length), roll="forward")
    q = std_t_ppf(levels, nu)
    c = std_t_es(levels, nu)
    return SimulationResult(ReturnSeries(dates, r), sigma, levels, sigma[:, None] * q, sigma[:, None] * c)


def write_simulation(result: SimulationResult, path: str | Path) -> None:
    result.to_frame().to_csv(path, index=False, float_format="%.17g", date_format="%Y-%m-%d")
