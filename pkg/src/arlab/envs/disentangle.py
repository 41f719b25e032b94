"""Planar object-disentangling task: a 3-joint arm carrying an S-hook caught in an open ring."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import ConfigError, ContractError, InvalidStateError
from .base import EnvSpec, ResetMode, StepResult, Terminal

SUCCESS_DISTANCE = 0.5


@dataclass
class ArmConfig:
    link_lengths: tuple[float, ...] = (0.4, 0.4, 0.3)
    base: tuple[float, float] = (0.0, 1.0)
    joint_limit: float = math.pi
    max_joint_delta: float = 0.1
    horizon: int = 50
    gamma: float = 0.99
    # "scaled": penalize the joint delta in radians; "unscaled": the raw policy output
    action_penalty: str = "scaled"

    def __post_init__(self):
        self.link_lengths = tuple(float(v) for v in self.link_lengths)
        self.base = tuple(float(v) for v in self.base)
        if len(self.link_lengths) != 3 or min(self.link_lengths) <= 0:
            raise ConfigError("env.link_lengths", "need three positive link lengths")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("env.gamma", f"must lie in (0, 1) for the collision penalty, got {self.gamma}")
        if self.max_joint_delta <= 0 or self.joint_limit <= 0 or self.horizon < 1:
            raise ConfigError("env", "joint limit, max_joint_delta and horizon must be positive")
        if self.action_penalty not in ("scaled", "unscaled"):
            raise ConfigError("env.action_penalty", "must be 'scaled' or 'unscaled'")

    @property
    def n_joints(self) -> int:
        return 3


def _segments(points: np.ndarray) -> np.ndarray:
    return np.stack([points[:-1], points[1:]], axis=1)


@dataclass
class Shapes:
    """Hook polyline in the end-effector frame (x along the last link) and the static ring."""

    hook: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.0, 0.07], [0.0, 0.0], [0.22, 0.0], [0.22, -0.12], [0.16, -0.12]]
        )
    )
    ring: np.ndarray = field(
        default_factory=lambda: np.array(
            [[-0.2, 0.35], [-0.35, 0.35], [-0.35, -0.35], [0.35, -0.35], [0.35, 0.35], [0.2, 0.35]]
        )
    )
    ring_center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in ("hook", "ring"):
            pts = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) <= 0):
                raise ContractError(f"{name} polyline has a zero-length segment")
            setattr(self, name, pts)
        self.ring_center = np.asarray(self.ring_center, dtype=np.float64)
        self.ring_segments = _segments(self.ring)


def fk(arm: ArmConfig, shapes: Shapes, q):
    """World-frame joint points (base, elbows, tip) and hook vertices."""
    q = np.asarray(q, dtype=np.float64)
    pts = [np.array(arm.base)]
    phi = 0.0
    for length, qi in zip(arm.link_lengths, q):
        phi += qi
        pts.append(pts[-1] + length * np.array([math.cos(phi), math.sin(phi)]))
    c, s = math.cos(phi), math.sin(phi)
    rot = np.array([[c, -s], [s, c]])
    hook = pts[-1] + shapes.hook @ rot.T
    return np.array(pts), hook


def world_segments(arm: ArmConfig, shapes: Shapes, q) -> np.ndarray:
    """All moving segments (links then hook) as an (n, 2, 2) array."""
    joints, hook = fk(arm, shapes, q)
    return np.concatenate([_segments(joints), _segments(hook)])


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _on_segment(a, b, p):
    return (
        (np.minimum(a[..., 0], b[..., 0]) <= p[..., 0])
        & (p[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
        & (np.minimum(a[..., 1], b[..., 1]) <= p[..., 1])
        & (p[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
    )


def segments_intersect(p1, p2, p3, p4):
    """Closed-segment intersection test; touching counts. Broadcasts over leading axes."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3, p4))
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0)))
    touch = (
        ((d1 == 0) & _on_segment(p3, p4, p1))
        | ((d2 == 0) & _on_segment(p3, p4, p2))
        | ((d3 == 0) & _on_segment(p1, p2, p3))
        | ((d4 == 0) & _on_segment(p1, p2, p4))
    )
    return proper | touch


def segment_intersect(p1, p2, p3, p4) -> bool:
    return bool(segments_intersect(p1, p2, p3, p4))


def collides(arm: ArmConfig, shapes: Shapes, q) -> bool:
    moving = world_segments(arm, shapes, q)
    ring = shapes.ring_segments
    a = moving[:, None, 0]
    b = moving[:, None, 1]
    return bool(np.any(segments_intersect(a, b, ring[None, :, 0], ring[None, :, 1])))


def object_distance(arm: ArmConfig, shapes: Shapes, q) -> float:
    _, hook = fk(arm, shapes, q)
    return float(np.linalg.norm(hook.mean(axis=0) - shapes.ring_center))


def collision_penalty(t: int, horizon: int, gamma: float) -> float:
    """Collision reward -(1 - gamma**(H - t + 1)) / (1 - gamma); larger for earlier collisions."""
    return -(1.0 - gamma ** (horizon - t + 1)) / (1.0 - gamma)


@dataclass
class Scenario:
    name: str
    tag: str  # "train" | "test"
    q: np.ndarray


def parse_scenarios(text: str) -> list[Scenario]:
    """Lines of ``<tag> <name> <q1> <q2> <q3>``; '#' starts a comment."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5 or parts[0] not in ("train", "test"):
            raise ValueError(f"scenario line {lineno}: expected '<train|test> <name> q1 q2 q3'")
        out.append(Scenario(parts[1], parts[0], np.array([float(v) for v in parts[2:]])))
    return out


def format_scenarios(scenarios) -> str:
    lines = ["# tag   name        q1 q2 q3 (radians)"]
    for sc in scenarios:
        lines.append(f"{sc.tag:<6} {sc.name:<10} " + " ".join(f"{v:.6f}" for v in sc.q))
    return "\n".join(lines) + "\n"


def load_scenarios(path=None) -> list[Scenario]:
    if path is None:
        text = resources.files("arlab.data").joinpath("scenarios.txt").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return parse_scenarios(text)


class DisentangleEnv:
    name = "disentangle2d"
    supports_teleport = True

    def __init__(self, arm: ArmConfig | None = None, shapes: Shapes | None = None, scenarios=None, rng=None):
        self.arm = arm or ArmConfig()
        self.shapes = shapes or Shapes()
        self.scenarios = list(scenarios) if scenarios is not None else load_scenarios()
        self.train_set = [s for s in self.scenarios if s.tag == "train"]
        self.test_set = [s for s in self.scenarios if s.tag == "test"]
        if not self.train_set:
            raise ContractError("disentangling env needs at least one training scenario")
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = EnvSpec(3, 3, np.full(3, self.arm.max_joint_delta), self.arm.horizon)
        self.state = None
        self.t = 0
        self.finished = False

    def validity_error(self, q):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (3,):
            return f"joint state must have shape (3,), got {q.shape}"
        if not np.all(np.isfinite(q)):
            return "joint state must be finite"
        if np.any(np.abs(q) > self.arm.joint_limit):
            return f"joint angles {np.round(q, 4).tolist()} exceed the limit {self.arm.joint_limit:.4f}"
        return None

    def is_valid(self, q) -> bool:
        return self.validity_error(q) is None

    def reset(self, mode: ResetMode = ResetMode.reset_dist()) -> np.ndarray:
        if mode.kind == "reset_dist":
            q = self.train_set[self.rng.integers(len(self.train_set))].q.copy()
        elif mode.kind == "uniform":
            lim = self.arm.joint_limit
            q = self.rng.uniform(-lim, lim, size=3)
        elif mode.kind == "explicit":
            err = self.validity_error(mode.state)
            if err:
                raise InvalidStateError(err)
            q = np.array(mode.state, dtype=np.float64)
        else:
            raise ContractError(f"unknown reset mode {mode.kind!r}")
        self.state = q
        self.t = 0
        self.finished = False
        return q.copy()

    def step(self, action, t=None, detect_success=True) -> StepResult:
        """Apply a joint-delta action; ``t`` is the step index used by the collision penalty."""
        if self.state is None:
            raise ContractError("step called before reset")
        if self.finished:
            raise ContractError("step called after a terminal state; reset first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (3,):
            raise ContractError(f"disentangling action must have shape (3,), got {action.shape}")
        if t is None:
            t = self.t
        res = dis_step(self.arm, self.shapes, self.state, action, t, detect_success)
        self.state = res.s_next.copy()
        self.t += 1
        self.finished = res.done
        return res

    def clone(self) -> "DisentangleEnv":
        return copy.deepcopy(self)


def dis_step(arm: ArmConfig, shapes: Shapes, q, action, t: int, detect_success=True) -> StepResult:
    delta = np.asarray(action, dtype=np.float64) * arm.max_joint_delta
    q_next = np.clip(np.asarray(q, dtype=np.float64) + delta, -arm.joint_limit, arm.joint_limit)
    if collides(arm, shapes, q_next):
        return StepResult(q_next, collision_penalty(t, arm.horizon, arm.gamma), Terminal.COLLISION)
    if detect_success and object_distance(arm, shapes, q_next) >= SUCCESS_DISTANCE:
        return StepResult(q_next, 1.0, Terminal.SUCCESS)
    penalized = delta if arm.action_penalty == "scaled" else np.asarray(action, dtype=np.float64)
    return StepResult(q_next, -float(np.linalg.norm(penalized)), Terminal.NONE)
