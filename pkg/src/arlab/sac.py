"""Soft actor-critic on top of :mod:`arlab.nn`: twin critics, polyak targets, auto-tuned entropy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigError, ContractError, DivergenceError
from .nn import (
    AdamState,
    GaussianHead,
    MlpParams,
    adam_step,
    adam_update,
    mlp_backprop,
    mlp_forward,
    squash,
    squashed_gaussian_grads,
    squashed_gaussian_sample,
)


@dataclass
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    grad_steps_per_env_step: int = 1
    entropy_mode: str = "auto"  # "auto" or "fixed"
    alpha_ent: float = 1.0  # fixed coefficient, or the initial one in auto mode
    target_entropy: Optional[float] = None  # None -> -action_dim
    buffer_capacity: int = 200_000
    hidden: list[int] = field(default_factory=lambda: [64, 64])

    def validate(self, prefix="sac"):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"{prefix}.gamma", f"must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"{prefix}.tau", f"must lie in (0, 1], got {self.tau}")
        if self.lr <= 0:
            raise ConfigError(f"{prefix}.lr", "must be positive")
        for name in ("batch_size", "grad_steps_per_env_step", "buffer_capacity"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{prefix}.{name}", "must be a positive integer")
        if self.entropy_mode not in ("auto", "fixed"):
            raise ConfigError(f"{prefix}.entropy_mode", "must be 'auto' or 'fixed'")
        if self.alpha_ent < 0 or (self.entropy_mode == "auto" and self.alpha_ent <= 0):
            raise ConfigError(f"{prefix}.alpha_ent", "must be positive (non-negative in fixed mode)")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError(f"{prefix}.hidden", "must list positive layer widths")
        return self


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ContractError("buffer capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s_next, done):
        sdim, adim = self.s.shape[1], self.a.shape[1]
        if np.shape(s) != (sdim,) or np.shape(s_next) != (sdim,) or np.shape(a) != (adim,):
            raise ContractError(f"transition shapes {np.shape(s)}, {np.shape(a)}, {np.shape(s_next)} do not match "
                                f"state dim {sdim} / action dim {adim}")
        i = self.inserted % self.capacity
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self.inserted += 1

    def add_transition(self, t: Transition):
        self.add(t.s, t.a, t.r, t.s_next, t.done)

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if len(self) == 0:
            raise ContractError("cannot sample from an empty buffer")
        return rng.integers(0, len(self), size=n)

    def sample(self, rng: np.random.Generator, n: int) -> Batch:
        idx = self.sample_indices(rng, n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        n = len(self)
        start = self.inserted - n
        out = []
        for k in range(start, self.inserted):
            i = k % self.capacity
            out.append(Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]), self.s_next[i].copy(), bool(self.done[i])))
        return out


class SacAgent:
    def __init__(self, state_dim: int, action_dim: int, config: SacConfig, rng: np.random.Generator):
        config.validate()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.config = config
        self.rng = rng
        h = list(config.hidden)
        self.policy = MlpParams.init([state_dim, *h, 2 * action_dim], rng)
        self.q1 = MlpParams.init([state_dim + action_dim, *h, 1], rng)
        self.q2 = MlpParams.init([state_dim + action_dim, *h, 1], rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt_policy = AdamState.like(self.policy.flat, lr=config.lr)
        self.opt_q1 = AdamState.like(self.q1.flat, lr=config.lr)
        self.opt_q2 = AdamState.like(self.q2.flat, lr=config.lr)
        self.log_alpha = np.array([np.log(config.alpha_ent) if config.alpha_ent > 0 else -np.inf])
        self.opt_alpha = AdamState.like(self.log_alpha, lr=config.lr)
        self.target_entropy = (
            float(config.target_entropy) if config.target_entropy is not None else -float(action_dim)
        )
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def networks(self) -> dict[str, MlpParams]:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2, "q1_target": self.q1_target, "q2_target": self.q2_target}

    def optimizers(self) -> dict[str, AdamState]:
        return {"policy": self.opt_policy, "q1": self.opt_q1, "q2": self.opt_q2, "alpha": self.opt_alpha}

    def train(self, buffer: ReplayBuffer, relabel: Optional[Callable[[Batch], np.ndarray]] = None) -> bool:
        """One train call: ``grad_steps_per_env_step`` SAC updates, or nothing while the buffer is short.

        ``relabel`` maps a sampled batch to replacement rewards.
        """
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            return False
        for _ in range(cfg.grad_steps_per_env_step):
            batch = buffer.sample(self.rng, cfg.batch_size)
            if relabel is not None:
                batch = batch._replace(r=relabel(batch))
            critic_update(self, batch)
            actor_update(self, batch)
            polyak(self, cfg.tau)
            self.updates += 1
        return True


def _q_input(s, a):
    return np.concatenate([s, a], axis=-1)


def policy_head(agent: SacAgent, s):
    out, cache = mlp_forward(agent.policy, s)
    return GaussianHead.from_output(out), cache


def act(agent: SacAgent, s, deterministic: bool = False, noise=None) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != agent.state_dim:
        raise ContractError(f"state has size {s.shape[-1]}, agent expects {agent.state_dim}")
    head, _ = policy_head(agent, s)
    if deterministic:
        return squash(head.mean)
    if noise is None:
        noise = agent.rng.standard_normal(head.mean.shape)
    action, _ = squashed_gaussian_sample(head, noise)
    return action


def soft_value(agent: SacAgent, s, noise) -> float:
    """One-sample soft state value: min(q1, q2)(s, a) - alpha * log pi(a|s), a ~ pi(.|s).

    Vectorizes over a leading batch axis of ``s`` and ``noise``.
    """
    head, _ = policy_head(agent, s)
    a, logp = squashed_gaussian_sample(head, noise)
    x = _q_input(np.asarray(s, dtype=np.float64), a)
    q1, _ = mlp_forward(agent.q1, x)
    q2, _ = mlp_forward(agent.q2, x)
    alpha = agent.alpha
    entropy_term = alpha * logp if alpha > 0 else 0.0
    v = np.minimum(q1[..., 0], q2[..., 0]) - entropy_term
    return float(v) if np.ndim(v) == 0 else v


def critic_targets(agent: SacAgent, batch: Batch, noise) -> np.ndarray:
    gamma = agent.config.gamma
    head, _ = policy_head(agent, batch.s_next)
    a2, logp2 = squashed_gaussian_sample(head, noise)
    x2 = _q_input(batch.s_next, a2)
    t1, _ = mlp_forward(agent.q1_target, x2)
    t2, _ = mlp_forward(agent.q2_target, x2)
    alpha = agent.alpha
    soft = np.minimum(t1[:, 0], t2[:, 0]) - (alpha * logp2 if alpha > 0 else 0.0)
    # terminal transitions contribute no bootstrap term at all, whatever s_next holds
    bootstrap = np.where(batch.done > 0.5, 0.0, gamma * soft)
    return batch.r + bootstrap


def critic_loss_grads(agent: SacAgent, batch: Batch, noise):
    """Summed MSE of both critics against fixed soft Bellman targets, with parameter gradients."""
    y = critic_targets(agent, batch, noise)
    x = _q_input(batch.s, batch.a)
    n = len(y)
    loss = 0.0
    grads = []
    for q in (agent.q1, agent.q2):
        out, cache = mlp_forward(q, x)
        err = out[:, 0] - y
        loss += float(np.mean(err**2))
        g, _ = mlp_backprop(q, cache, (2.0 / n) * err[:, None])
        grads.append(g)
    return loss, grads


def critic_update(agent: SacAgent, batch: Batch, noise=None) -> float:
    if len(batch.r) == 0:
        raise ContractError("critic_update needs a non-empty batch")
    if noise is None:
        noise = agent.rng.standard_normal((len(batch.r), agent.action_dim))
    loss, (g1, g2) = critic_loss_grads(agent, batch, noise)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite critic loss")
    adam_step(agent.opt_q1, agent.q1, g1)
    adam_step(agent.opt_q2, agent.q2, g2)
    return loss


def actor_loss_grads(agent: SacAgent, s, noise, alpha: Optional[float] = None):
    """Actor loss mean(alpha*log pi(a|s) - min q(s, a)) with reparameterized a.

    Returns ``(loss, policy_grads, log_probs)``.
    """
    if alpha is None:
        alpha = agent.alpha
    s = np.asarray(s, dtype=np.float64)
    n = len(s)
    out, pcache = mlp_forward(agent.policy, s)
    head = GaussianHead.from_output(out)
    a, logp = squashed_gaussian_sample(head, noise)
    x = _q_input(s, a)
    q1, c1 = mlp_forward(agent.q1, x)
    q2, c2 = mlp_forward(agent.q2, x)
    use1 = q1[:, 0] <= q2[:, 0]
    qmin = np.where(use1, q1[:, 0], q2[:, 0])
    loss = float(np.mean(alpha * logp - qmin))

    upstream = np.full((n, 1), -1.0 / n)
    _, dx1 = mlp_backprop(agent.q1, c1, upstream * use1[:, None])
    _, dx2 = mlp_backprop(agent.q2, c2, upstream * (~use1)[:, None])
    d_action = (dx1 + dx2)[:, agent.state_dim :]
    d_mean, d_log_std = squashed_gaussian_grads(head, noise, a, d_action, np.full(n, alpha / n))
    grads, _ = mlp_backprop(agent.policy, pcache, np.concatenate([d_mean, d_log_std], axis=1))
    return loss, grads, logp


def alpha_loss_grad(log_alpha: float, logp, target_entropy: float):
    """Temperature loss -mean(log_alpha * (log pi + target)), log pi held constant."""
    m = float(np.mean(np.asarray(logp) + target_entropy))
    return -log_alpha * m, -m


def actor_update(agent: SacAgent, batch: Batch, noise=None) -> float:
    if len(batch.s) == 0:
        raise ContractError("actor_update needs a non-empty batch")
    if noise is None:
        noise = agent.rng.standard_normal((len(batch.s), agent.action_dim))
    loss, grads, logp = actor_loss_grads(agent, batch.s, noise)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite actor loss")
    adam_step(agent.opt_policy, agent.policy, grads)
    if agent.config.entropy_mode == "auto":
        _, g = alpha_loss_grad(agent.log_alpha[0], logp, agent.target_entropy)
        adam_update(agent.opt_alpha, agent.log_alpha, np.array([g]))
    return loss


def polyak(agent: SacAgent, tau: float) -> None:
    for online, target in ((agent.q1, agent.q1_target), (agent.q2, agent.q2_target)):
        target.flat *= 1.0 - tau
        target.flat += tau * online.flat
