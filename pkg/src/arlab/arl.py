"""Adversarial RL: an adversary drives the agent for H_A steps, then the protagonist takes over.

The loop follows the off-policy schedule: each iteration runs K_A episodes in which only
the adversary learns, then K_P episodes in which only the protagonist learns. Both
replay buffers are filled in every episode.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .envs.base import RESET_DIST, Terminal, compute_return
from .errors import ConfigError, DivergenceError
from .rng import get_state, rng_stream, set_state
from .sac import ReplayBuffer, SacAgent, SacConfig, act, soft_value

ADVERSARY_KINDS = ("learned", "random", "none")


@dataclass
class ArlConfig:
    N: int = 200
    K_A: int = 10
    K_P: int = 10
    H_A: int = 100
    H_P: int = 100
    adversary_kind: str = "learned"
    relabel_adversary_rewards: bool = False
    # False disables success terminals for the protagonist (collisions still end episodes)
    early_termination: bool = True

    def validate(self, prefix="arl"):
        for name in ("N", "K_A", "K_P", "H_P"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{prefix}.{name}", "must be >= 1")
        if int(self.H_A) < 0:
            raise ConfigError(f"{prefix}.H_A", "must be >= 0")
        if self.adversary_kind not in ADVERSARY_KINDS:
            raise ConfigError(f"{prefix}.adversary_kind", f"must be one of {ADVERSARY_KINDS}")
        if self.adversary_kind == "none" and self.H_A != 0:
            raise ConfigError(f"{prefix}.H_A", "adversary_kind 'none' requires H_A = 0")
        return self

    @property
    def has_adversary_phase(self) -> bool:
        """Only a learning adversary gets its own training episodes."""
        return self.adversary_kind == "learned"

    @property
    def episodes_per_iteration(self) -> int:
        return self.K_A + self.K_P


@dataclass
class PhaseLog:
    adversary_train_calls: int = 0
    protagonist_train_calls: int = 0
    adversary_insertions: int = 0
    protagonist_insertions: int = 0
    episodes: int = 0
    terminations: dict = field(default_factory=lambda: {"success": 0, "collision": 0, "adversary_collision": 0})

    def as_dict(self):
        return asdict(self)


@dataclass
class EpisodeRecord:
    iteration: int
    phase: str
    episode: int
    start_state: np.ndarray
    handoff_state: Optional[np.ndarray]
    rewards: list
    adversary_rewards: list
    cause: str
    gamma: float

    @property
    def undiscounted_return(self) -> float:
        return compute_return(self.rewards, 1.0)

    @property
    def discounted_return(self) -> float:
        return compute_return(self.rewards, self.gamma)

    @property
    def success(self) -> bool:
        return self.cause == "success"


def adversary_reward(protagonist: SacAgent, s_next, noise) -> float:
    """Negative soft value of the protagonist at the reached state."""
    return -soft_value(protagonist, s_next, noise)


def random_adversary_action(rng: np.random.Generator, action_dim: int) -> np.ndarray:
    # uniform draws are half-open [low, high); nudging low keeps the result in the open interval
    return rng.uniform(np.nextafter(-1.0, 0.0), 1.0, size=action_dim)


METRIC_FIELDS = [
    "iteration", "phase", "episode", "return", "discounted_return", "adversary_return",
    "steps", "cause", "buffer_A", "buffer_P",
]


class ArlTrainer:
    """Holds both agents, both buffers and every random stream of one training run."""

    def __init__(
        self,
        env,
        config: ArlConfig,
        protagonist_config: SacConfig,
        adversary_config: Optional[SacConfig] = None,
        seed: int = 0,
        metrics_sink: Optional[Callable[[dict], None]] = None,
    ):
        config.validate()
        self.env = env
        self.config = config
        self.seed = int(seed)
        spec = env.spec
        self.env.rng = rng_stream(seed, "env")
        self.protagonist = SacAgent(spec.state_dim, spec.action_dim, protagonist_config, rng_stream(seed, "protagonist"))
        self.protagonist_act_rng = rng_stream(seed, "protagonist.act")
        self.D_P = ReplayBuffer(protagonist_config.buffer_capacity, spec.state_dim, spec.action_dim)
        adversary_config = adversary_config or protagonist_config
        self.adversary = None
        if config.adversary_kind == "learned":
            self.adversary = SacAgent(spec.state_dim, spec.action_dim, adversary_config, rng_stream(seed, "adversary"))
        self.adversary_act_rng = rng_stream(seed, "adversary.act")
        self.adversary_reward_rng = rng_stream(seed, "adversary.reward")
        self.D_A = ReplayBuffer(adversary_config.buffer_capacity, spec.state_dim, spec.action_dim)
        self.log = PhaseLog()
        self.iteration = 0
        self.metrics_sink = metrics_sink
        self.visits = np.zeros((env.grid.height, env.grid.width), dtype=np.int64) if hasattr(env, "grid") else None
        self.on_iteration_end: Optional[Callable[["ArlTrainer"], None]] = None

    # -- bookkeeping -------------------------------------------------------------------

    def _visit(self, s):
        if self.visits is not None:
            self.visits[math.floor(s[1]), math.floor(s[0])] += 1

    def _relabel(self):
        if not self.config.relabel_adversary_rewards:
            return None
        rng = self.adversary_reward_rng

        def relabel(batch):
            noise = rng.standard_normal((len(batch.r), self.protagonist.action_dim))
            fresh = -soft_value(self.protagonist, batch.s_next, noise)
            # terminal (collision) transitions keep their stored penalty
            return np.where(batch.done > 0.5, batch.r, fresh)

        return relabel

    def _adversary_action(self, s):
        if self.config.adversary_kind == "random":
            return random_adversary_action(self.adversary_act_rng, self.env.spec.action_dim)
        noise = self.adversary_act_rng.standard_normal(self.env.spec.action_dim)
        return act(self.adversary, s, deterministic=False, noise=noise)

    # -- episodes and phases --------------------------------------------------------------

    def run_episode(self, phase: str) -> EpisodeRecord:
        cfg, env = self.config, self.env
        s = env.reset(RESET_DIST)
        start = s.copy()
        self._visit(s)
        adv_rewards = []
        cause = "timeout"
        relabel = self._relabel() if phase == "A" else None
        for t in range(cfg.H_A):
            a = self._adversary_action(s)
            res = env.step(a, t=t, detect_success=False)
            if res.terminal is Terminal.COLLISION:
                r_a, done = res.reward, True
            else:
                noise = self.adversary_reward_rng.standard_normal(self.protagonist.action_dim)
                r_a, done = adversary_reward(self.protagonist, res.s_next, noise), False
            self.D_A.add(s, a, r_a, res.s_next, done)
            self.log.adversary_insertions += 1
            adv_rewards.append(r_a)
            if phase == "A" and self.adversary is not None:
                self.adversary.train(self.D_A, relabel)
                self.log.adversary_train_calls += 1
            s = res.s_next
            self._visit(s)
            if done:
                cause = "adversary_collision"
                break

        handoff = None
        rewards = []
        if cause != "adversary_collision":
            handoff = s.copy()
            for t in range(cfg.H_P):
                noise = self.protagonist_act_rng.standard_normal(self.protagonist.action_dim)
                a = act(self.protagonist, s, deterministic=False, noise=noise)
                res = env.step(a, t=t, detect_success=cfg.early_termination)
                self.D_P.add(s, a, res.reward, res.s_next, res.done)
                self.log.protagonist_insertions += 1
                rewards.append(res.reward)
                if phase == "P":
                    self.protagonist.train(self.D_P)
                    self.log.protagonist_train_calls += 1
                s = res.s_next
                self._visit(s)
                if res.done:
                    cause = res.terminal.value
                    break
        if cause in self.log.terminations:
            self.log.terminations[cause] += 1
        rec = EpisodeRecord(
            self.iteration, phase, self.log.episodes, start, handoff, rewards, adv_rewards, cause,
            self.protagonist.config.gamma,
        )
        self.log.episodes += 1
        if self.metrics_sink is not None:
            self.metrics_sink(metrics_row(rec, len(self.D_A), len(self.D_P)))
        return rec

    def phases(self):
        """Phase label of each episode within one iteration."""
        cfg = self.config
        if cfg.has_adversary_phase:
            return ["A"] * cfg.K_A + ["P"] * cfg.K_P
        return ["P"] * cfg.episodes_per_iteration

    def train(self, until_iteration: Optional[int] = None):
        stop = self.config.N if until_iteration is None else min(until_iteration, self.config.N)
        while self.iteration < stop:
            for phase in self.phases():
                try:
                    self.run_episode(phase)
                except DivergenceError as e:
                    e.iteration, e.episode = self.iteration, self.log.episodes
                    raise
            self.iteration += 1
            if self.on_iteration_end is not None:
                self.on_iteration_end(self)
        return self

    # -- checkpoint state ---------------------------------------------------------------

    def rng_streams(self) -> dict:
        streams = {
            "env": self.env.rng,
            "protagonist": self.protagonist.rng,
            "protagonist.act": self.protagonist_act_rng,
            "adversary.act": self.adversary_act_rng,
            "adversary.reward": self.adversary_reward_rng,
        }
        if self.adversary is not None:
            streams["adversary"] = self.adversary.rng
        return streams

    def state(self):
        """(metadata, arrays) capturing everything needed to resume bit-exactly."""
        meta = {
            "iteration": self.iteration,
            "log": self.log.as_dict(),
            "rng": {k: get_state(r) for k, r in self.rng_streams().items()},
            "agents": {},
            "buffers": {"D_A": self.D_A.inserted, "D_P": self.D_P.inserted},
        }
        arrays = {}
        for name, agent in (("protagonist", self.protagonist), ("adversary", self.adversary)):
            if agent is None:
                continue
            meta["agents"][name] = {
                "updates": agent.updates,
                "steps": {k: o.step_count for k, o in agent.optimizers().items()},
            }
            for net_name, net in agent.networks().items():
                arrays[f"{name}.{net_name}"] = net.flat
            for opt_name, opt in agent.optimizers().items():
                arrays[f"{name}.opt.{opt_name}.m"] = opt.m
                arrays[f"{name}.opt.{opt_name}.v"] = opt.v
            arrays[f"{name}.log_alpha"] = agent.log_alpha
        for bname, buf in (("D_A", self.D_A), ("D_P", self.D_P)):
            # only the filled prefix; unfilled slots are never read before being written
            for field_name in ("s", "a", "r", "s_next", "done"):
                arrays[f"{bname}.{field_name}"] = getattr(buf, field_name)[: len(buf)]
        if self.visits is not None:
            arrays["visits"] = self.visits.astype(np.float64)
        return meta, arrays

    def load_state(self, meta, arrays):
        self.iteration = int(meta["iteration"])
        log = meta["log"]
        self.log = PhaseLog(**{k: (dict(v) if isinstance(v, dict) else v) for k, v in log.items()})
        for k, r in self.rng_streams().items():
            set_state(r, meta["rng"][k])
        for name, agent in (("protagonist", self.protagonist), ("adversary", self.adversary)):
            if agent is None:
                continue
            info = meta["agents"][name]
            agent.updates = int(info["updates"])
            for net_name, net in agent.networks().items():
                net.flat[...] = arrays[f"{name}.{net_name}"]
            for opt_name, opt in agent.optimizers().items():
                opt.m[...] = arrays[f"{name}.opt.{opt_name}.m"]
                opt.v[...] = arrays[f"{name}.opt.{opt_name}.v"]
                opt.step_count = int(info["steps"][opt_name])
            agent.log_alpha[...] = arrays[f"{name}.log_alpha"]
        for bname, buf in (("D_A", self.D_A), ("D_P", self.D_P)):
            buf.inserted = int(meta["buffers"][bname])
            for field_name in ("s", "a", "r", "s_next", "done"):
                getattr(buf, field_name)[: len(buf)] = arrays[f"{bname}.{field_name}"]
        if self.visits is not None:
            self.visits[...] = arrays["visits"].astype(np.int64)


def metrics_row(rec: EpisodeRecord, size_a: int, size_p: int) -> dict:
    return {
        "iteration": rec.iteration,
        "phase": rec.phase,
        "episode": rec.episode,
        "return": rec.undiscounted_return,
        "discounted_return": rec.discounted_return,
        "adversary_return": compute_return(rec.adversary_rewards, rec.gamma),
        "steps": len(rec.rewards),
        "cause": rec.cause,
        "buffer_A": size_a,
        "buffer_P": size_p,
    }


def train(env, config: ArlConfig, protagonist_config: SacConfig, adversary_config=None, seed=0, metrics_sink=None):
    """Run the full schedule and return the finished trainer."""
    return ArlTrainer(env, config, protagonist_config, adversary_config, seed, metrics_sink).train()


def plain_sac(env, sac_config: SacConfig, n_episodes: int, horizon: int, seed=0, metrics_sink=None,
              episodes_per_iteration: int = 1):
    """Standalone SAC loop on the reset distribution, written independently of ArlTrainer.

    Consumes the same named random streams, so it must match ``adversary_kind='none'``.
    """
    env.rng = rng_stream(seed, "env")
    spec = env.spec
    agent = SacAgent(spec.state_dim, spec.action_dim, sac_config, rng_stream(seed, "protagonist"))
    act_rng = rng_stream(seed, "protagonist.act")
    buf = ReplayBuffer(sac_config.buffer_capacity, spec.state_dim, spec.action_dim)
    for ep in range(n_episodes):
        s = env.reset(RESET_DIST)
        rewards, cause = [], "timeout"
        for t in range(horizon):
            a = act(agent, s, noise=act_rng.standard_normal(spec.action_dim))
            res = env.step(a, t=t)
            buf.add(s, a, res.reward, res.s_next, res.done)
            rewards.append(res.reward)
            agent.train(buf)
            s = res.s_next
            if res.done:
                cause = res.terminal.value
                break
        if metrics_sink is not None:
            metrics_sink({
                "iteration": ep // episodes_per_iteration,
                "phase": "P",
                "episode": ep,
                "return": compute_return(rewards, 1.0),
                "discounted_return": compute_return(rewards, sac_config.gamma),
                "adversary_return": 0.0,
                "steps": len(rewards),
                "cause": cause,
                "buffer_A": 0,
                "buffer_P": len(buf),
            })
    return agent
