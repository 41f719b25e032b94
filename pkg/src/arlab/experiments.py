"""The relative-performance experiments: maze (SAC / RA / ASAC10) and disentangle2d (SAC / ASAC10).

Runs are cached in run directories keyed by config hash, so the acceptance tests
reuse finished runs and only train what is missing.
"""
from __future__ import annotations

import os
from pathlib import Path

from .config import default_config
from .runner import load_summary, run

SEEDS = (0, 1, 2)
MAZE_METHODS = ("sac", "ra", "asac10")
DISENTANGLE_METHODS = ("sac", "asac10")
DISENTANGLE_BUDGET = 10000  # full budget; about half an hour per run on one core

DEFAULT_ROOT = Path(os.environ.get("ARL_ACCEPTANCE_RUNS", Path(__file__).resolve().parents[2] / "acceptance_runs"))


def maze_config(method: str, seed: int) -> dict:
    cfg = default_config("maze", method)
    cfg["seed"] = seed
    cfg["checkpoint_every"] = 25
    return cfg


def disentangle_config(method: str, seed: int) -> dict:
    cfg = default_config("disentangle2d", method, budget=DISENTANGLE_BUDGET)
    cfg["seed"] = seed
    cfg["checkpoint_every"] = 25
    return cfg


def all_configs():
    for m in MAZE_METHODS:
        for s in SEEDS:
            yield maze_config(m, s)
    for m in DISENTANGLE_METHODS:
        for s in SEEDS:
            yield disentangle_config(m, s)


def ensure(config: dict, root=DEFAULT_ROOT) -> dict:
    """Summary of a finished run, training it first if needed."""
    return load_summary(run(config, root))


def results(kind: str, root=DEFAULT_ROOT) -> dict:
    """{method: [summary per seed]} for 'maze' or 'disentangle2d'."""
    if kind == "maze":
        return {m: [ensure(maze_config(m, s), root) for s in SEEDS] for m in MAZE_METHODS}
    return {m: [ensure(disentangle_config(m, s), root) for s in SEEDS] for m in DISENTANGLE_METHODS}
