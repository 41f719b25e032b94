"""Dense networks with hand-written backprop, Adam, and the tanh-squashed Gaussian head."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DivergenceError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# largest float below 1: tanh rounds to exactly 1 beyond |u| ~ 19 in float64
ACTION_BOUND = float(np.nextafter(1.0, 0.0))


def _layer_shapes(layer_sizes):
    return [((o, i), (o,)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]


def _views(layer_sizes, flat):
    weights, biases, k = [], [], 0
    for (ws, bs) in _layer_shapes(layer_sizes):
        n = ws[0] * ws[1]
        weights.append(flat[k : k + n].reshape(ws))
        k += n
        biases.append(flat[k : k + bs[0]])
        k += bs[0]
    return weights, biases


def n_params(layer_sizes) -> int:
    return sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


class MlpParams:
    """Layer weights (out, in) and biases, stored as views into one flat float64 buffer."""

    def __init__(self, layer_sizes, weights=None, biases=None, flat=None):
        self.layer_sizes = [int(n) for n in layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ContractError("an MLP needs at least input and output sizes, all positive")
        if flat is None:
            flat = np.zeros(n_params(self.layer_sizes))
            if weights is not None:
                if len(weights) != len(self.layer_sizes) - 1 or len(biases) != len(weights):
                    raise ContractError("weights/biases count does not match layer_sizes")
                wv, bv = _views(self.layer_sizes, flat)
                for i, ((ws, bs), w, b) in enumerate(zip(_layer_shapes(self.layer_sizes), weights, biases)):
                    w, b = np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)
                    if w.shape != ws or b.shape != bs:
                        raise ContractError(f"layer {i}: expected W{ws}, b{bs}, got W{w.shape}, b{b.shape}")
                    wv[i][...] = w
                    bv[i][...] = b
        elif flat.shape != (n_params(self.layer_sizes),):
            raise ContractError(f"flat buffer has {flat.size} entries, layout needs {n_params(self.layer_sizes)}")
        self.flat = flat
        self.weights, self.biases = _views(self.layer_sizes, flat)

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "MlpParams":
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
        params = cls(layer_sizes)
        for w in params.weights:
            bound = 1.0 / math.sqrt(w.shape[1])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
        return params

    @classmethod
    def zeros(cls, layer_sizes) -> "MlpParams":
        return cls(layer_sizes)

    def arrays(self) -> list[np.ndarray]:
        """Parameter views in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, flat=self.flat.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.layer_sizes)

    def __repr__(self):
        return f"MlpParams({self.layer_sizes})"


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Forward pass with rectifier hidden layers and a linear output.

    ``x`` may be a single vector or a (batch, in) matrix. Returns the output and a
    cache of per-layer inputs and pre-activations for :func:`mlp_backprop`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.layer_sizes[0]:
        raise ContractError(f"input has size {x.shape[-1]}, network expects {params.layer_sizes[0]}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, (inputs, pre)


def mlp_backprop(params: MlpParams, cache, upstream_grad: np.ndarray):
    """Gradients of ``sum(upstream_grad * output)`` w.r.t. every parameter and the input."""
    inputs, pre = cache
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != pre[-1].shape:
        raise ContractError(f"upstream gradient shape {g.shape} does not match output {pre[-1].shape}")
    grads = MlpParams(params.layer_sizes)
    n = len(params.weights)
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            g = g * (pre[i] > 0.0)
        h = inputs[i]
        if g.ndim == 1:
            np.outer(g, h, out=grads.weights[i])
            grads.biases[i][...] = g
        else:
            np.matmul(g.T, h, out=grads.weights[i])
            np.sum(g, axis=0, out=grads.biases[i])
        g = g @ params.weights[i]
    return grads, g


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, flat: np.ndarray, lr=3e-4, **kw) -> "AdamState":
        return cls(np.zeros_like(flat), np.zeros_like(flat), lr=lr, **kw)


def adam_update(state: AdamState, flat: np.ndarray, grad: np.ndarray) -> None:
    """In-place Adam step on a flat parameter vector."""
    if grad.shape != flat.shape or state.m.shape != flat.shape:
        raise ContractError(f"Adam: gradient {grad.shape}, parameters {flat.shape}, moments {state.m.shape}")
    if not np.isfinite(grad).all():
        raise DivergenceError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    m, v = state.m, state.v
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    flat -= (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)


def adam_step(state: AdamState, params: MlpParams, grads: MlpParams) -> None:
    """Adam step on a network; a non-finite gradient reports the offending layer."""
    if not np.isfinite(grads.flat).all():
        for i, (w, b) in enumerate(zip(grads.weights, grads.biases)):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DivergenceError(f"non-finite gradient in layer {i}", layer=i)
    adam_update(state, params.flat, grads.flat)


@dataclass
class GaussianHead:
    mean: np.ndarray
    log_std: np.ndarray
    # raw (pre-clamp) log_std; gradient is zero where the clamp is active
    raw_log_std: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.raw_log_std is None:
            self.raw_log_std = self.log_std
        self.log_std = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    @classmethod
    def from_output(cls, out: np.ndarray) -> "GaussianHead":
        d = out.shape[-1] // 2
        raw = out[..., d:]
        return cls(out[..., :d], raw, raw)


def squash(u):
    """tanh kept strictly inside (-1, 1)."""
    return np.clip(np.tanh(u), -ACTION_BOUND, ACTION_BOUND)


def squashed_gaussian_sample(head: GaussianHead, noise: np.ndarray):
    """Reparameterized tanh-Gaussian sample and its log-density.

    Works elementwise on any leading batch shape; the log-probability sums over the
    last axis.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != head.mean.shape:
        raise ContractError(f"noise shape {noise.shape} does not match action shape {head.mean.shape}")
    std = np.exp(head.log_std)
    u = head.mean + std * noise
    action = squash(u)
    log_prob = np.sum(
        -0.5 * noise**2 - head.log_std - HALF_LOG_2PI - np.log(1.0 - action**2 + SQUASH_EPS),
        axis=-1,
    )
    return action, log_prob


def squashed_gaussian_grads(head: GaussianHead, noise, action, d_action, d_logp):
    """Backprop through :func:`squashed_gaussian_sample`.

    Given upstream gradients w.r.t. the action and the log-probability, returns
    gradients w.r.t. the mean and the raw (unclamped) log_std.
    """
    std = np.exp(head.log_std)
    one_minus = 1.0 - action**2
    dlogp_du = 2.0 * action * one_minus / (one_minus + SQUASH_EPS)
    d_logp = np.asarray(d_logp)[..., None]
    du = d_action * one_minus + d_logp * dlogp_du
    d_mean = du
    d_log_std = du * std * noise - d_logp
    active = (head.raw_log_std >= LOG_STD_MIN) & (head.raw_log_std <= LOG_STD_MAX)
    return d_mean, d_log_std * active


def param_digest(*nets: MlpParams) -> str:
    """Stable hash of parameter values, used to detect mutation."""
    import hashlib

    h = hashlib.sha256()
    for net in nets:
        for a in net.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()
