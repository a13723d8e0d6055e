"""Derivative-free and quasi-Newton minimizers used by every estimation step.

``minimize_nonsmooth`` runs a Nelder-Mead simplex from each start (with
restarts from the incumbent) and keeps the best result. Objectives wrapped in
:class:`JitObjective` run the whole simplex loop inside a numba kernel; plain
Python callables use the equivalent pure-Python loop.

``minimize_smooth`` is BFGS with central finite-difference gradients and a
backtracking line search that treats non-finite objective values as
infeasible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

NONSMOOTH_TOL = 1e-7
SMOOTH_TOL = 1e-8
MAX_ITER = 5000
STAGNATION_RTOL = 1e-14
STAGNATION_ITERS = 30

_RHO, _CHI, _PSI, _SIGMA = 1.0, 2.0, 0.5, 0.5


class OptimizationError(RuntimeError):
    """Raised when a minimization cannot produce a usable point."""

    def __init__(self, message: str, best: np.ndarray | None = None, value: float = np.inf):
        super().__init__(message)
        self.best = best
        self.value = value


@dataclass
class JitObjective:
    """A numba-compiled objective ``func(x, args)`` bound to its data tuple."""

    func: Callable
    args: tuple

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float), self.args))


@dataclass
class OptimizeProblem:
    objective: Callable
    dim: int
    starts: Sequence
    bounds: tuple | None = None

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.bounds is None:
            return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (self.dim,)).copy() for b in self.bounds)
        if np.any(lo > hi):
            raise ValueError("lower bound above upper bound")
        return lo, hi


@dataclass
class OptimizeResult:
    argmin: np.ndarray
    value: float
    converged: bool
    evaluations: int
    start_index: int = 0
    values: list = field(default_factory=list)


def _default_step(x: np.ndarray) -> np.ndarray:
    return np.where(x != 0.0, 0.05 * x, 0.00025)


def _valid_starts(problem: OptimizeProblem, lo, hi) -> list[tuple[int, np.ndarray, float]]:
    valid = []
    for i, s in enumerate(problem.starts):
        x = np.asarray(s, dtype=float).reshape(-1)
        if x.shape != (problem.dim,):
            raise ValueError(f"start {i} has shape {x.shape}, expected ({problem.dim},)")
        if np.any(x < lo) or np.any(x > hi):
            continue
        fx = problem.objective(x)
        if np.isfinite(fx):
            valid.append((i, x, float(fx)))
    return valid


# ---------------------------------------------------------------------------
# Nelder-Mead

def _nm_python(f, x0, step, tol, max_iter, lo, hi):
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        y = x0.copy()
        y[i] += step[i]
        sim[i + 1] = np.minimum(np.maximum(y, lo), hi)
    nfev = 0
    for i in range(n + 1):
        v = f(sim[i])
        fs[i] = v if v == v else np.inf
        nfev += 1
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="stable")
        sim = sim[order]
        fs = fs[order]
        if fs[n] - fs[0] <= tol:
            converged = True
            break
        it += 1
        xbar = np.zeros(n)
        for j in range(n):
            xbar += sim[j]
        xbar /= n
        xr = np.minimum(np.maximum((1 + _RHO) * xbar - _RHO * sim[n], lo), hi)
        fr = f(xr)
        fr = fr if fr == fr else np.inf
        nfev += 1
        shrink = False
        if fr < fs[0]:
            xe = np.minimum(np.maximum((1 + _RHO * _CHI) * xbar - _RHO * _CHI * sim[n], lo), hi)
            fe = f(xe)
            fe = fe if fe == fe else np.inf
            nfev += 1
            if fe < fr:
                sim[n], fs[n] = xe, fe
            else:
                sim[n], fs[n] = xr, fr
        elif fr < fs[n - 1]:
            sim[n], fs[n] = xr, fr
        elif fr < fs[n]:
            xc = np.minimum(np.maximum((1 + _PSI * _RHO) * xbar - _PSI * _RHO * sim[n], lo), hi)
            fc = f(xc)
            fc = fc if fc == fc else np.inf
            nfev += 1
            if fc <= fr:
                sim[n], fs[n] = xc, fc
            else:
                shrink = True
        else:
            xcc = np.minimum(np.maximum((1 - _PSI) * xbar + _PSI * sim[n], lo), hi)
            fcc = f(xcc)
            fcc = fcc if fcc == fcc else np.inf
            nfev += 1
            if fcc < fs[n]:
                sim[n], fs[n] = xcc, fcc
            else:
                shrink = True
        if shrink:
            for j in range(1, n + 1):
                sim[j] = sim[0] + _SIGMA * (sim[j] - sim[0])
                v = f(sim[j])
                fs[j] = v if v == v else np.inf
                nfev += 1
    j = int(np.argmin(fs))
    return sim[j].copy(), float(fs[j]), converged, nfev, it


@njit(cache=True)
def _clip(x, lo, hi):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        if v < lo[i]:
            v = lo[i]
        elif v > hi[i]:
            v = hi[i]
        out[i] = v
    return out


@njit(cache=True)
def _finite_or_inf(v):
    if v != v:
        return np.inf
    return v


@njit(cache=True)
def _nm_kernel(func, args, x0, step, tol, max_iter, lo, hi):
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        y = x0.copy()
        y[i] += step[i]
        sim[i + 1] = _clip(y, lo, hi)
    nfev = 0
    for i in range(n + 1):
        fs[i] = _finite_or_inf(func(sim[i], args))
        nfev += 1
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="mergesort")
        sim = sim[order]
        fs = fs[order]
        if fs[n] - fs[0] <= tol:
            converged = True
            break
        it += 1
        xbar = np.zeros(n)
        for j in range(n):
            xbar += sim[j]
        xbar /= n
        xr = _clip((1 + _RHO) * xbar - _RHO * sim[n], lo, hi)
        fr = _finite_or_inf(func(xr, args))
        nfev += 1
        shrink = False
        if fr < fs[0]:
            xe = _clip((1 + _RHO * _CHI) * xbar - _RHO * _CHI * sim[n], lo, hi)
            fe = _finite_or_inf(func(xe, args))
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        elif fr < fs[n]:
            xc = _clip((1 + _PSI * _RHO) * xbar - _PSI * _RHO * sim[n], lo, hi)
            fc = _finite_or_inf(func(xc, args))
            nfev += 1
            if fc <= fr:
                sim[n] = xc
                fs[n] = fc
            else:
                shrink = True
        else:
            xcc = _clip((1 - _PSI) * xbar + _PSI * sim[n], lo, hi)
            fcc = _finite_or_inf(func(xcc, args))
            nfev += 1
            if fcc < fs[n]:
                sim[n] = xcc
                fs[n] = fcc
            else:
                shrink = True
        if shrink:
            for j in range(1, n + 1):
                sim[j] = sim[0] + _SIGMA * (sim[j] - sim[0])
                fs[j] = _finite_or_inf(func(sim[j], args))
                nfev += 1
    j = np.argmin(fs)
    return sim[j].copy(), fs[j], converged, nfev, it


def nelder_mead(objective, x0, step=None, tol: float = NONSMOOTH_TOL, max_iter: int = MAX_ITER,
                lo=None, hi=None, restarts: int = 2):
    """Single-start simplex search with restarts from the incumbent.

    A restart rebuilds the simplex around the best point; restarting stops once
    a pass improves the objective by no more than ``tol``.

    Returns
    -------
    tuple
        ``(x, f, converged, evaluations)``
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    step0 = None if step is None else np.broadcast_to(np.asarray(step, dtype=float), (n,)).copy()
    jit = isinstance(objective, JitObjective)
    best_f = np.inf
    total = 0
    used = 0
    converged = False
    for _ in range(restarts + 1):
        st = _default_step(x) if step0 is None else step0
        if jit:
            x_new, f_new, conv, nfev, it = _nm_kernel(objective.func, objective.args, x, st,
                                                       tol, max_iter - used, lo, hi)
            f_new = float(f_new)
        else:
            x_new, f_new, conv, nfev, it = _nm_python(objective, x, st, tol, max_iter - used, lo, hi)
        total += nfev
        used += it
        improved = best_f - f_new
        if f_new <= best_f:
            x, best_f = x_new, f_new
        converged = bool(conv)
        if not conv or used >= max_iter or improved <= tol:
            break
    return x, best_f, converged, total


def minimize_nonsmooth(problem: OptimizeProblem, tol: float = NONSMOOTH_TOL,
                       max_iter: int = MAX_ITER, step=None, restarts: int = 2) -> OptimizeResult:
    """Best Nelder-Mead result over all valid starts (ties go to the lowest index)."""
    lo, hi = problem.box()
    valid = _valid_starts(problem, lo, hi)
    if not valid:
        raise OptimizationError("no start point with a finite objective inside the bounds")
    best = None
    values = []
    evals = len(valid)
    for idx, x0, _ in valid:
        x, fx, conv, nfev = nelder_mead(problem.objective, x0, step=step, tol=tol,
                                        max_iter=max_iter, lo=lo, hi=hi, restarts=restarts)
        evals += nfev
        values.append(fx)
        if best is None or fx < best[1]:
            best = (x, fx, conv, idx)
    x, fx, conv, idx = best
    value = float(problem.objective(x))
    return OptimizeResult(x, value, conv and np.isfinite(value), evals + 1, idx, values)


# ---------------------------------------------------------------------------
# Quasi-Newton

def _fd_step(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-8 * np.abs(x))


def fd_gradient(f, x, fx: float | None = None) -> tuple[np.ndarray, int]:
    """Central differences; falls back to a one-sided difference at an infeasible side."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x)
    g = np.zeros_like(x)
    nfev = 0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        fp = f(x + e)
        fm = f(x - e)
        nfev += 2
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2 * h[i])
        else:
            if fx is None:
                fx = f(x)
                nfev += 1
            if np.isfinite(fp):
                g[i] = (fp - fx) / h[i]
            elif np.isfinite(fm):
                g[i] = (fx - fm) / h[i]
    return g, nfev


def _bfgs(f, x0, tol, max_iter, stall_tol):
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx = f(x)
    nfev = 1
    if not np.isfinite(fx):
        raise OptimizationError("objective not finite at the start", x, fx)
    g, k = fd_gradient(f, x, fx)
    nfev += k
    H = np.eye(n)
    converged = False
    reset = False
    stagnant = 0
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            converged = True
            break
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
        t = 1.0
        pmax = float(np.max(np.abs(p)))
        if pmax > 10.0:
            t = 10.0 / pmax
        accepted = False
        for _ls in range(60):
            x_new = x + t * p
            f_new = f(x_new)
            nfev += 1
            if np.isfinite(f_new) and f_new <= fx + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if not reset:
                H = np.eye(n)
                reset = True
                continue
            converged = gnorm < stall_tol
            break
        reset = False
        g_new, k = fd_gradient(f, x_new, f_new)
        nfev += k
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        decrease = fx - f_new
        x, fx, g = x_new, f_new, g_new
        if decrease <= 1e-15 * max(1.0, abs(fx)) and float(np.max(np.abs(g))) < stall_tol:
            converged = True
            break
        # objective frozen at machine precision (e.g. a very narrow valley where
        # finite differences cannot resolve the gradient)
        stagnant = stagnant + 1 if decrease <= STAGNATION_RTOL * max(1.0, abs(fx)) else 0
        if stagnant >= STAGNATION_ITERS:
            converged = True
            break
    return x, float(fx), converged, nfev


def minimize_smooth(problem: OptimizeProblem, tol: float = SMOOTH_TOL, max_iter: int = MAX_ITER,
                    stall_tol: float = 1e-5) -> OptimizeResult:
    """BFGS from every valid start; the lowest objective wins (ties to lowest index).

    ``converged`` is set when the max-abs finite-difference gradient drops below
    ``tol``, when no further decrease is possible in floating point while the
    gradient is already below ``stall_tol``, or when the relative decrease stays
    below ``STAGNATION_RTOL`` for ``STAGNATION_ITERS`` consecutive iterations.
    """
    lo, hi = problem.box()
    f = problem.objective
    if problem.bounds is not None:
        raw = f

        def f(x):
            if np.any(x < lo) or np.any(x > hi):
                return np.inf
            return raw(x)

    valid = _valid_starts(problem, lo, hi)
    if not valid:
        raise OptimizationError("no start point with a finite objective inside the bounds")
    best = None
    values = []
    evals = len(valid)
    for idx, x0, _ in valid:
        x, fx, conv, nfev = _bfgs(f, x0, tol, max_iter, stall_tol)
        evals += nfev
        values.append(fx)
        if best is None or fx < best[1]:
            best = (x, fx, conv, idx)
    x, fx, conv, idx = best
    value = float(f(x))
    return OptimizeResult(x, value, conv, evals + 1, idx, values)


def multi_start_grid(center, n_random: int, scale, seed: int) -> list[np.ndarray]:
    """``center`` followed by ``n_random`` uniform draws from ``center +/- scale``."""
    if n_random < 0:
        raise ValueError("n_random must be non-negative")
    center = np.asarray(center, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), center.shape)
    rng = np.random.default_rng(seed)
    draws = center + scale * rng.uniform(-1.0, 1.0, size=(n_random, center.size))
    return [center.copy()] + [d for d in draws]
