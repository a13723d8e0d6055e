"""YAML configuration for the rolling pipeline.

Keys may be nested (``optimizer: {seed: 3}``) or dotted (``optimizer.seed: 3``)::

    grid.alpha: 0.025            grid.alpha1: 0.005        grid.m: 3
    window.n: 1000               window.h: 2000
    universe.models: [GJR-GARCH-t, CAViaR-AS]
    pot.threshold_frac: 0.1      care.grid_size: 100       care.search: grid
    caviar.starts: 10000         caviar.refine: 10
    optimizer.tol: 1.0e-7        optimizer.smooth_tol: 1.0e-8
    optimizer.max_iter: 5000     optimizer.n_starts: 20    optimizer.wq_starts: 10
    optimizer.seed: 0
    pipeline.variant: FC-WQ      pipeline.warm_start: false
    pipeline.reestimate_every: 1
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .combine import make_grid
from .data import WindowSpec
from .models.universe import ALL_MODELS, UniverseConfig
from .pipeline import PipelineConfig

DEFAULTS = {
    "grid.alpha": 0.025,
    "grid.alpha1": 0.005,
    "grid.m": 3,
    "window.n": 1000,
    "window.h": 2000,
    "universe.models": list(ALL_MODELS),
    "pot.threshold_frac": 0.1,
    "care.grid_size": 100,
    "care.search": "grid",
    "caviar.starts": 10_000,
    "caviar.refine": 10,
    "optimizer.tol": 1e-7,
    "optimizer.smooth_tol": 1e-8,
    "optimizer.max_iter": 5000,
    "optimizer.n_starts": 20,
    "optimizer.wq_starts": 10,
    "optimizer.seed": 0,
    "pipeline.variant": "FC-WQ",
    "pipeline.warm_start": False,
    "pipeline.reestimate_every": 1,
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def config_from_dict(raw: dict | None) -> PipelineConfig:
    flat = _flatten(raw or {})
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    c = {**DEFAULTS, **flat}
    seed = int(c["optimizer.seed"])
    warm = bool(c["pipeline.warm_start"])
    universe = UniverseConfig(
        models=tuple(c["universe.models"]),
        pot_threshold_frac=float(c["pot.threshold_frac"]),
        care_grid_size=int(c["care.grid_size"]),
        care_search=str(c["care.search"]),
        caviar_candidates=int(c["caviar.starts"]),
        caviar_refine=int(c["caviar.refine"]),
        warm_start=warm,
        seed=seed,
        smooth_tol=float(c["optimizer.smooth_tol"]),
        nonsmooth_tol=float(c["optimizer.tol"]),
        max_iter=int(c["optimizer.max_iter"]),
    )
    return PipelineConfig(
        grid=make_grid(float(c["grid.alpha"]), float(c["grid.alpha1"]), int(c["grid.m"])),
        window=WindowSpec(int(c["window.n"]), int(c["window.h"])),
        universe=universe,
        variant=str(c["pipeline.variant"]),
        seed=seed,
        combo_starts=int(c["optimizer.n_starts"]),
        wq_starts=int(c["optimizer.wq_starts"]),
        warm_start=warm,
        reestimate_every=int(c["pipeline.reestimate_every"]),
        nonsmooth_tol=float(c["optimizer.tol"]),
        smooth_tol=float(c["optimizer.smooth_tol"]),
        max_iter=int(c["optimizer.max_iter"]),
    )


def load_config(path: str | Path) -> PipelineConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return config_from_dict(raw)
