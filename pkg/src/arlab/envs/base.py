from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class Terminal(str, enum.Enum):
    NONE = "none"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass
class EnvSpec:
    state_dim: int
    action_dim: int
    action_scale: np.ndarray
    horizon_P: int

    def __post_init__(self):
        self.action_scale = np.broadcast_to(np.asarray(self.action_scale, dtype=np.float64), (self.action_dim,)).copy()
        if not (np.all(np.isfinite(self.action_scale)) and np.all(self.action_scale > 0)):
            raise ValueError("action_scale entries must be positive and finite")
        if self.state_dim < 1 or self.action_dim < 1 or self.horizon_P < 1:
            raise ValueError("state_dim, action_dim and horizon_P must be positive")


@dataclass
class StepResult:
    s_next: np.ndarray
    reward: float
    terminal: Terminal = Terminal.NONE
    timed_out: bool = False

    @property
    def done(self) -> bool:
        """True only for genuine terminal states; timeouts are bootstrapped."""
        return self.terminal is not Terminal.NONE


@dataclass(frozen=True)
class ResetMode:
    kind: str  # "reset_dist" | "explicit" | "uniform"
    state: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def reset_dist(cls):
        return cls("reset_dist")

    @classmethod
    def explicit(cls, state):
        return cls("explicit", np.asarray(state, dtype=np.float64))

    @classmethod
    def uniform(cls):
        return cls("uniform")


RESET_DIST = ResetMode.reset_dist()


def compute_return(rewards, gamma: float = 1.0) -> float:
    """Discounted sum ``sum_t gamma**t * r_t``; an empty trajectory returns 0."""
    rewards = np.asarray(list(rewards), dtype=np.float64)
    if rewards.size == 0:
        return 0.0
    return float(np.sum(rewards * gamma ** np.arange(rewards.size)))
