"""Continuous point-mass maze with speed-capped velocity actions and wall sliding."""
from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ContractError, InvalidStateError, MissingCellError, RaggedMazeError, UnreachableGoalError
from .base import EnvSpec, ResetMode, StepResult, Terminal

WALL, FREE, GOAL, RESET = "#", ".", "G", "R"
SWEEP_INTERVAL = 0.25


@dataclass(frozen=True)
class MazeGrid:
    """Row-major cell grid; cell (col i, row j) covers x in [i, i+1), y in [j, j+1)."""

    rows: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def height(self) -> int:
        return len(self.rows)

    def cell(self, col: int, row: int) -> str:
        if 0 <= row < self.height and 0 <= col < self.width:
            return self.rows[row][col]
        return WALL

    def cell_at(self, x: float, y: float) -> str:
        return self.cell(math.floor(x), math.floor(y))

    def is_wall_at(self, x: float, y: float) -> bool:
        return self.cell_at(x, y) == WALL

    def cells_of(self, kind: str) -> list[tuple[int, int]]:
        return [(i, j) for j, row in enumerate(self.rows) for i, c in enumerate(row) if c == kind]

    def open_cells(self) -> list[tuple[int, int]]:
        """Every non-wall cell as (col, row), row-major."""
        return [(i, j) for j, row in enumerate(self.rows) for i, c in enumerate(row) if c != WALL]

    def to_text(self) -> str:
        return "\n".join(self.rows) + "\n"


def _flood(rows, start):
    seen = {start}
    todo = deque([start])
    while todo:
        i, j = todo.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (i + di, j + dj)
            if 0 <= n[1] < len(rows) and 0 <= n[0] < len(rows[0]) and rows[n[1]][n[0]] != WALL and n not in seen:
                seen.add(n)
                todo.append(n)
    return seen


def parse_maze(text: str) -> MazeGrid:
    """Parse an ASCII maze: '#' wall, '.' free, 'G' goal, 'R' reset."""
    rows = tuple(line.rstrip("\r") for line in text.strip("\n").split("\n"))
    if not rows or not rows[0]:
        raise RaggedMazeError("maze is empty")
    if any(len(r) != len(rows[0]) for r in rows):
        raise RaggedMazeError("maze rows have different lengths")
    bad = {c for r in rows for c in r} - {WALL, FREE, GOAL, RESET}
    if bad:
        raise RaggedMazeError(f"unknown maze characters: {sorted(bad)}")
    grid = MazeGrid(rows)
    goals, resets = grid.cells_of(GOAL), grid.cells_of(RESET)
    if not goals:
        raise MissingCellError("maze has no goal cell 'G'")
    if not resets:
        raise MissingCellError("maze has no reset cell 'R'")
    border = rows[0] + rows[-1] + "".join(r[0] + r[-1] for r in rows)
    if set(border) != {WALL}:
        raise RaggedMazeError("maze boundary must be walled")
    reach = _flood(rows, resets[0])
    if not any(g in reach for g in goals):
        raise UnreachableGoalError("no goal cell is reachable from the reset cell")
    return grid


def load_maze(path=None) -> MazeGrid:
    if path is None:
        return parse_maze(resources.files("arlab.data").joinpath("maze10.txt").read_text(encoding="utf-8"))
    with open(path, encoding="utf-8") as f:
        return parse_maze(f.read())


@dataclass
class MazeConfig:
    max_speed: float = 1.0
    step_penalty_coeff: float = 0.05
    goal_reward: float = 1.0
    horizon: int = 100

    def __post_init__(self):
        if min(self.max_speed, self.step_penalty_coeff, self.goal_reward, self.horizon) <= 0:
            raise ValueError("maze config values must all be positive")


def cap_action(a, max_speed: float = 1.0) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    n = math.hypot(a[0], a[1])
    if n <= max_speed:
        return a.copy()
    return a * (max_speed / n)


def _path_clear(grid: MazeGrid, x0, y0, x1, y1) -> bool:
    n = max(1, math.ceil(max(abs(x1 - x0), abs(y1 - y0)) / SWEEP_INTERVAL))
    for k in range(1, n + 1):
        f = k / n
        if grid.is_wall_at(x0 + f * (x1 - x0), y0 + f * (y1 - y0)):
            return False
    return True


def move_with_slide(grid: MazeGrid, s, delta) -> np.ndarray:
    """Move axis by axis (x first), dropping any component whose swept path hits a wall."""
    x, y = float(s[0]), float(s[1])
    dx, dy = float(delta[0]), float(delta[1])
    if dx != 0.0 and _path_clear(grid, x, y, x + dx, y):
        x += dx
    if dy != 0.0 and _path_clear(grid, x, y, x, y + dy):
        y += dy
    return np.array([x, y])


def maze_step(grid: MazeGrid, config: MazeConfig, s, action, action_scale=1.0, detect_success=True) -> StepResult:
    delta = cap_action(np.asarray(action, dtype=np.float64) * action_scale, config.max_speed)
    s_next = move_with_slide(grid, s, delta)
    if detect_success and grid.cell_at(*s_next) == GOAL:
        return StepResult(s_next, config.goal_reward, Terminal.SUCCESS)
    applied = math.hypot(s_next[0] - s[0], s_next[1] - s[1])
    return StepResult(s_next, -config.step_penalty_coeff * applied, Terminal.NONE)


class MazeEnv:
    name = "maze"
    supports_teleport = True

    def __init__(self, grid: MazeGrid, config: MazeConfig | None = None, rng: np.random.Generator | None = None):
        self.grid = grid
        self.config = config or MazeConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = EnvSpec(2, 2, np.full(2, self.config.max_speed), self.config.horizon)
        self._reset_cells = grid.cells_of(RESET)
        self._open = grid.open_cells()
        self.state = None
        self.t = 0
        self.finished = False

    def validity_error(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (2,):
            return f"maze state must have shape (2,), got {s.shape}"
        if not np.all(np.isfinite(s)):
            return "maze state must be finite"
        if self.grid.is_wall_at(s[0], s[1]):
            return f"position ({s[0]:.3f}, {s[1]:.3f}) lies inside a wall cell"
        return None

    def is_valid(self, s) -> bool:
        return self.validity_error(s) is None

    def _sample_in(self, cells):
        i, j = cells[self.rng.integers(len(cells))]
        return np.array([i + self.rng.random(), j + self.rng.random()])

    def reset(self, mode: ResetMode = ResetMode.reset_dist()) -> np.ndarray:
        if mode.kind == "reset_dist":
            s = self._sample_in(self._reset_cells)
        elif mode.kind == "uniform":
            s = self._sample_in(self._open)
        elif mode.kind == "explicit":
            err = self.validity_error(mode.state)
            if err:
                raise InvalidStateError(err)
            s = np.array(mode.state, dtype=np.float64)
        else:
            raise ContractError(f"unknown reset mode {mode.kind!r}")
        self.state = s
        self.t = 0
        self.finished = False
        return s.copy()

    def step(self, action, t=None, detect_success=True) -> StepResult:
        if self.state is None:
            raise ContractError("step called before reset")
        if self.finished:
            raise ContractError("step called after a terminal state; reset first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (2,):
            raise ContractError(f"maze action must have shape (2,), got {action.shape}")
        res = maze_step(self.grid, self.config, self.state, action, self.spec.action_scale, detect_success)
        self.state = res.s_next.copy()
        self.t += 1
        self.finished = res.done
        return res

    def clone(self) -> "MazeEnv":
        return copy.deepcopy(self)
