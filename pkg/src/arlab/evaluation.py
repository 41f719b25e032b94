"""Evaluation grids, scenario evaluation, summary statistics and heatmap/CSV output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs.base import ResetMode, compute_return
from .errors import ContractError
from .sac import SacAgent, act


@dataclass
class EvalGrid:
    """Per-cell statistics; wall cells hold NaN means and zero counts."""

    mean_return: np.ndarray  # (height, width)
    success_rate: np.ndarray  # fraction in [0, 1]
    counts: np.ndarray  # episodes per cell
    walls: np.ndarray  # bool mask

    @property
    def shape(self):
        return self.mean_return.shape

    def overall_success(self) -> float:
        """Success rate averaged over evaluated cells, in percent."""
        return 100.0 * float(np.mean(self.success_rate[~self.walls]))

    def overall_return(self) -> float:
        return float(np.mean(self.mean_return[~self.walls]))


@dataclass
class MethodSummary:
    method: str
    mean_return: float
    return_stderr: float
    success_rate: float  # percent
    success_stderr: float
    n_runs: int

    @property
    def single_run(self) -> bool:
        return self.n_runs == 1


def stderr(values) -> float:
    """Sample standard deviation over sqrt(n); 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def summarize(method: str, run_returns, run_success_rates) -> MethodSummary:
    """Aggregate per-run mean returns and success rates (percent) across runs."""
    run_returns = np.asarray(run_returns, dtype=np.float64)
    run_success_rates = np.asarray(run_success_rates, dtype=np.float64)
    if run_returns.size == 0 or run_returns.size != run_success_rates.size:
        raise ContractError("need one return and one success rate per run, at least one run")
    return MethodSummary(
        method,
        float(run_returns.mean()),
        stderr(run_returns),
        float(run_success_rates.mean()),
        stderr(run_success_rates),
        int(run_returns.size),
    )


def rollout_batch(agent: SacAgent, envs, starts, horizon: int):
    """Deterministic rollouts from explicit starts, one env per start, sharing policy forwards.

    Returns per-episode (undiscounted return, success flag, step count).
    """
    n = len(envs)
    states = np.array([env.reset(ResetMode.explicit(s)) for env, s in zip(envs, starts)])
    rewards = [[] for _ in range(n)]
    success = np.zeros(n, dtype=bool)
    active = list(range(n))
    for t in range(horizon):
        if not active:
            break
        actions = act(agent, states[active], deterministic=True)
        still = []
        for k, i in enumerate(active):
            res = envs[i].step(actions[k], t=t)
            rewards[i].append(res.reward)
            states[i] = res.s_next
            if res.done:
                success[i] = res.terminal.value == "success"
            else:
                still.append(i)
        active = still
    returns = np.array([compute_return(r, 1.0) for r in rewards])
    return returns, success, np.array([len(r) for r in rewards])


def evaluate_uniform(agent: SacAgent, env, n_per_cell: int = 5, rng=None, horizon=None) -> EvalGrid:
    """Deterministic-policy returns from uniform starting positions inside every open maze cell."""
    grid = env.grid
    cells = grid.open_cells()
    if not cells:
        raise ContractError("maze has no open cells to evaluate")
    rng = rng if rng is not None else np.random.default_rng(0)
    horizon = horizon or env.spec.horizon_P
    starts, owners = [], []
    for (i, j) in cells:
        for _ in range(n_per_cell):
            starts.append(np.array([i + rng.random(), j + rng.random()]))
            owners.append((i, j))
    envs = [env.clone() for _ in starts]
    returns, success, _ = rollout_batch(agent, envs, starts, horizon)
    shape = (grid.height, grid.width)
    sums, succ, counts = np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=np.int64)
    for (i, j), r, s in zip(owners, returns, success):
        sums[j, i] += r
        succ[j, i] += s
        counts[j, i] += 1
    walls = counts == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(walls, np.nan, sums / np.maximum(counts, 1))
        rate = np.where(walls, np.nan, succ / np.maximum(counts, 1))
    return EvalGrid(mean, rate, counts, walls)


def evaluate_scenarios(agent: SacAgent, env, scenarios, trials: int = 100, rng=None, method="policy"):
    """Run ``trials`` episodes from starts drawn uniformly among ``scenarios``.

    Returns a single-run :class:`MethodSummary` (success in percent) plus the raw
    per-trial returns and success flags.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ContractError("scenario set is empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    picks = rng.integers(len(scenarios), size=trials)
    # deterministic policy and dynamics: one rollout per distinct scenario suffices
    uniq = sorted(set(int(p) for p in picks))
    envs = [env.clone() for _ in uniq]
    rets, succ, _ = rollout_batch(agent, envs, [scenarios[k].q for k in uniq], env.spec.horizon_P)
    lookup = {k: (r, s) for k, r, s in zip(uniq, rets, succ)}
    returns = np.array([lookup[int(p)][0] for p in picks])
    successes = np.array([lookup[int(p)][1] for p in picks])
    summary = summarize(method, [returns.mean()], [100.0 * successes.mean()])
    return summary, returns, successes


# -- output --------------------------------------------------------------------------

GRID_FIELDS = ["col", "row", "wall", "episodes", "mean_return", "success_rate"]


def write_grid_csv(grid: EvalGrid, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(GRID_FIELDS)
        h, wd = grid.shape
        for j in range(h):
            for i in range(wd):
                wall = bool(grid.walls[j, i])
                w.writerow([i, j, int(wall), int(grid.counts[j, i]),
                            "" if wall else repr(float(grid.mean_return[j, i])),
                            "" if wall else repr(float(grid.success_rate[j, i]))])


def read_grid_csv(path) -> EvalGrid:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    h = 1 + max(int(r["row"]) for r in rows)
    wd = 1 + max(int(r["col"]) for r in rows)
    mean, rate = np.full((h, wd), np.nan), np.full((h, wd), np.nan)
    counts, walls = np.zeros((h, wd), dtype=np.int64), np.zeros((h, wd), dtype=bool)
    for r in rows:
        i, j = int(r["col"]), int(r["row"])
        walls[j, i] = r["wall"] == "1"
        counts[j, i] = int(r["episodes"])
        if not walls[j, i]:
            mean[j, i] = float(r["mean_return"])
            rate[j, i] = float(r["success_rate"])
    return EvalGrid(mean, rate, counts, walls)


def heatmap_pixels(grid: EvalGrid) -> np.ndarray:
    """Affine map of cell means onto 0..255 (min -> 0, max -> 255); walls are 0.

    A degenerate range (all means equal) maps every open cell to 255.
    """
    vals = grid.mean_return[~grid.walls]
    pix = np.zeros(grid.shape, dtype=np.int64)
    if vals.size == 0:
        return pix
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        pix[~grid.walls] = 255
    else:
        scaled = np.round((grid.mean_return - lo) / (hi - lo) * 255.0)
        pix[~grid.walls] = scaled[~grid.walls].astype(np.int64)
    return pix


def write_pgm(pixels: np.ndarray, path) -> None:
    h, w = pixels.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(int(v)) for v in row) for row in pixels]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="ascii").split()
    if tokens[0] != "P2":
        raise ValueError("not an ASCII graymap")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[4 : 4 + w * h]]).reshape(h, w)


def write_heatmap(grid: EvalGrid, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.pgm``; ``path`` is a file stem."""
    stem = Path(path)
    csv_path, pgm_path = stem.with_suffix(".csv"), stem.with_suffix(".pgm")
    write_grid_csv(grid, csv_path)
    write_pgm(heatmap_pixels(grid), pgm_path)
    return csv_path, pgm_path


# -- exploration ---------------------------------------------------------------------

def visit_counts(states, maze) -> np.ndarray:
    counts = np.zeros((maze.height, maze.width), dtype=np.int64)
    states = np.asarray(states, dtype=np.float64).reshape(-1, 2)
    if len(states):
        cols = np.floor(states[:, 0]).astype(np.int64)
        rows = np.floor(states[:, 1]).astype(np.int64)
        np.add.at(counts, (rows, cols), 1)
    return counts


def exploration_footprint(visits, maze) -> float:
    """Fraction of open maze cells visited at least once.

    ``visits`` is either a (height, width) count grid or an (n, 2) array of positions.
    """
    visits = np.asarray(visits)
    if visits.shape != (maze.height, maze.width):
        visits = visit_counts(visits, maze)
    open_cells = maze.open_cells()
    seen = sum(1 for (i, j) in open_cells if visits[j, i] > 0)
    return seen / len(open_cells)
