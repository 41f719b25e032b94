import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arlab.errors import ConfigError, ContractError, DivergenceError
from arlab.nn import GaussianHead, MlpParams, param_digest, squashed_gaussian_sample
from arlab.sac import (
    Batch,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    Transition,
    act,
    actor_loss_grads,
    actor_update,
    alpha_loss_grad,
    critic_loss_grads,
    critic_targets,
    critic_update,
    polyak,
    soft_value,
)

from conftest import central_diff, rel_error


def make_agent(sdim=3, adim=2, seed=0, **kw):
    cfg = SacConfig(**{"hidden": [8, 8], "batch_size": 4, **kw})
    return SacAgent(sdim, adim, cfg, np.random.default_rng(seed))


def random_batch(rng, n=5, sdim=3, adim=2, done=None):
    return Batch(
        rng.normal(size=(n, sdim)),
        np.tanh(rng.normal(size=(n, adim))),
        rng.normal(size=n),
        rng.normal(size=(n, sdim)),
        (rng.random(n) < 0.3).astype(float) if done is None else np.full(n, float(done)),
    )


def constant_critics(agent, c):
    for q in (agent.q1, agent.q2, agent.q1_target, agent.q2_target):
        q.flat[:] = 0.0
        q.biases[-1][0] = c


def test_config_validation():
    with pytest.raises(ConfigError) as e:
        SacConfig(gamma=1.0).validate()
    assert "gamma" in str(e.value)
    for bad in ({"tau": 0.0}, {"lr": -1.0}, {"batch_size": 0}, {"entropy_mode": "x"}, {"buffer_capacity": 0}):
        with pytest.raises(ConfigError):
            SacConfig(**bad).validate()


def test_targets_start_as_copies():
    a = make_agent()
    assert np.array_equal(a.q1.flat, a.q1_target.flat)
    assert a.q1_target.flat is not a.q1.flat
    assert a.q1_target.layer_sizes == a.q1.layer_sizes


# -- replay buffer ------------------------------------------------------------------

def test_buffer_fifo_eviction():
    buf = ReplayBuffer(5, 1, 1)
    for i in range(8):
        buf.add([i], [0.0], float(i), [i + 1], False)
    assert len(buf) == 5
    assert [t.r for t in buf.contents()] == [3.0, 4.0, 5.0, 6.0, 7.0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 30))
def test_buffer_capacity_plus_k(capacity, k):
    buf = ReplayBuffer(capacity, 1, 1)
    for i in range(capacity + k):
        buf.add_transition(Transition(np.array([i]), np.array([0.0]), float(i), np.array([i]), False))
    kept = [t.r for t in buf.contents()]
    assert len(buf) == capacity
    assert kept == [float(i) for i in range(k, capacity + k)]


def test_buffer_sampling_uniform_chi_square():
    from scipy.stats import chisquare

    buf = ReplayBuffer(50, 1, 1)
    for i in range(50):
        buf.add([i], [0.0], 0.0, [0], False)
    idx = buf.sample_indices(np.random.default_rng(5), 100_000)
    counts = np.bincount(idx, minlength=50)
    assert chisquare(counts).pvalue > 0.001


def test_buffer_shape_contract():
    buf = ReplayBuffer(3, 2, 1)
    with pytest.raises(ContractError):
        buf.add([0.0], [0.0], 0.0, [0.0, 0.0], False)


def test_train_noop_until_batch_available():
    a = make_agent(batch_size=4)
    buf = ReplayBuffer(10, 3, 2)
    before = param_digest(*a.networks().values())
    for i in range(3):
        buf.add(np.zeros(3), np.zeros(2), 0.0, np.zeros(3), False)
        assert a.train(buf) is False
    assert param_digest(*a.networks().values()) == before
    buf.add(np.zeros(3), np.zeros(2), 0.0, np.zeros(3), False)
    assert a.train(buf) is True
    assert a.updates == 1


# -- soft value ---------------------------------------------------------------------

def test_soft_value_zero_critics():
    a = make_agent(alpha_ent=0.0, entropy_mode="fixed")
    constant_critics(a, 0.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert soft_value(a, rng.normal(size=3), rng.normal(size=2)) == 0.0


def test_soft_value_constant_critics():
    a = make_agent(alpha_ent=0.0, entropy_mode="fixed")
    constant_critics(a, 2.5)
    assert soft_value(a, np.ones(3), np.zeros(2)) == 2.5


def test_soft_value_formula(rng):
    a = make_agent(alpha_ent=0.3, entropy_mode="fixed")
    s, noise = rng.normal(size=3), rng.normal(size=2)
    out = a.policy.weights[0] @ s
    h = np.maximum(out + a.policy.biases[0], 0)
    h = np.maximum(a.policy.weights[1] @ h + a.policy.biases[1], 0)
    o = a.policy.weights[2] @ h + a.policy.biases[2]
    act_, logp = squashed_gaussian_sample(GaussianHead(o[:2], o[2:]), noise)
    x = np.concatenate([s, act_])

    def q(p):
        h = np.maximum(p.weights[0] @ x + p.biases[0], 0)
        h = np.maximum(p.weights[1] @ h + p.biases[1], 0)
        return float((p.weights[2] @ h + p.biases[2])[0])

    want = min(q(a.q1), q(a.q2)) - 0.3 * logp
    assert soft_value(a, s, noise) == pytest.approx(want, abs=1e-12)


def test_soft_value_monte_carlo_consistency():
    a = make_agent(alpha_ent=0.2, entropy_mode="fixed", seed=4)
    s = np.array([0.3, -0.2, 0.5])
    rng = np.random.default_rng(11)
    small = soft_value(a, np.tile(s, (10_000, 1)), rng.normal(size=(10_000, 2)))
    big = np.concatenate([
        soft_value(a, np.tile(s, (100_000, 1)), rng.normal(size=(100_000, 2))) for _ in range(10)
    ])
    se = math.hypot(np.std(small) / math.sqrt(small.size), np.std(big) / math.sqrt(big.size))
    assert abs(small.mean() - big.mean()) <= 3 * se


# -- critic -------------------------------------------------------------------------

def test_all_done_targets_equal_rewards(rng):
    a = make_agent()
    b = random_batch(rng, done=True)
    assert np.array_equal(critic_targets(a, b, rng.normal(size=(5, 2))), b.r)


def test_zero_discount_targets_equal_rewards(rng):
    a = make_agent()
    a.config.gamma = 0.0  # rejected by validation, but the target formula must still cut off
    b = random_batch(rng)
    assert np.array_equal(critic_targets(a, b, rng.normal(size=(5, 2))), b.r)


def test_terminal_targets_ignore_s_next(rng):
    a = make_agent()
    b = random_batch(rng, n=6)
    b = b._replace(done=np.array([1.0, 0.0, 1.0, 1.0, 0.0, 1.0]))
    noise = rng.normal(size=(6, 2))
    y = critic_targets(a, b, noise)
    perm = b.s_next.copy()
    term = np.flatnonzero(b.done > 0.5)
    perm[term] = b.s_next[term[::-1]] + 10.0
    y2 = critic_targets(a, b._replace(s_next=perm), noise)
    assert np.array_equal(y[term], y2[term])
    assert np.array_equal(y[b.done < 0.5], y2[b.done < 0.5])


def test_critic_target_hand_computed():
    # one-unit networks: policy outputs (mean, log_std) = (w_m * s, b_ls); critics q = w_q * x summed
    cfg = SacConfig(hidden=[], batch_size=1, gamma=0.9, alpha_ent=0.5, entropy_mode="fixed")
    a = SacAgent(1, 1, cfg, np.random.default_rng(0))
    a.policy.weights[0][...] = [[0.4], [0.0]]
    a.policy.biases[0][...] = [0.0, -0.5]
    a.q1_target.weights[0][...] = [[1.0, 2.0]]
    a.q2_target.weights[0][...] = [[1.5, -1.0]]
    a.q1_target.biases[0][...] = [0.1]
    a.q2_target.biases[0][...] = [0.0]
    s2, eps, r = 0.7, 0.3, 0.25
    u = 0.4 * s2 + math.exp(-0.5) * eps
    act_ = math.tanh(u)
    logp = -0.5 * eps**2 + 0.5 - 0.5 * math.log(2 * math.pi) - math.log(1 - act_**2 + 1e-6)
    q1 = 0.1 + s2 + 2.0 * act_
    q2 = 1.5 * s2 - act_
    want = r + 0.9 * (min(q1, q2) - 0.5 * logp)
    b = Batch(np.array([[0.0]]), np.array([[0.0]]), np.array([r]), np.array([[s2]]), np.array([0.0]))
    assert critic_targets(a, b, np.array([[eps]]))[0] == pytest.approx(want, abs=1e-12)


def test_critic_gradients_finite_differences(rng):
    a = make_agent(alpha_ent=0.2, entropy_mode="fixed")
    b = random_batch(rng, n=6)
    noise = rng.normal(size=(6, 2))
    _, (g1, g2) = critic_loss_grads(a, b, noise)

    def loss():
        return critic_loss_grads(a, b, noise)[0]

    assert rel_error(g1.flat, central_diff(loss, a.q1.flat)) <= 1e-4
    assert rel_error(g2.flat, central_diff(loss, a.q2.flat)) <= 1e-4


def test_critic_update_leaves_policy_alone(rng):
    a = make_agent()
    before = param_digest(a.policy)
    critic_update(a, random_batch(rng))
    assert param_digest(a.policy) == before


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_critic_update_divergence(rng):
    a = make_agent()
    b = random_batch(rng)
    b.r[0] = np.inf
    with pytest.raises(DivergenceError):
        critic_update(a, b)


# -- actor --------------------------------------------------------------------------

def test_actor_gradients_finite_differences(rng):
    a = make_agent(alpha_ent=0.3, entropy_mode="fixed")
    s = rng.normal(size=(6, 3))
    noise = rng.normal(size=(6, 2))
    _, g, _ = actor_loss_grads(a, s, noise)

    def loss():
        return actor_loss_grads(a, s, noise)[0]

    assert rel_error(g.flat, central_diff(loss, a.policy.flat)) <= 1e-4


def test_alpha_loss_gradient_finite_differences(rng):
    logp = rng.normal(size=7)
    la = np.array([-0.7])
    _, g = alpha_loss_grad(la[0], logp, -2.0)
    fd = central_diff(lambda: alpha_loss_grad(la[0], logp, -2.0)[0], la)
    assert rel_error(g, fd) <= 1e-4


def test_constant_critics_leave_only_entropy_gradient(rng):
    a = make_agent(alpha_ent=0.3, entropy_mode="fixed")
    constant_critics(a, 1.7)
    s, noise = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    _, g, _ = actor_loss_grads(a, s, noise)
    _, g_entropy_only, _ = actor_loss_grads(a, s, noise)
    constant_critics(a, -4.0)
    _, g_other, _ = actor_loss_grads(a, s, noise)
    assert np.array_equal(g.flat, g_other.flat)
    assert np.array_equal(g.flat, g_entropy_only.flat)


def test_zero_alpha_constant_critics_no_policy_change(rng):
    a = make_agent(alpha_ent=0.0, entropy_mode="fixed")
    constant_critics(a, 1.0)
    before = a.policy.flat.copy()
    actor_update(a, random_batch(rng))
    assert np.array_equal(a.policy.flat, before)


def test_actor_update_leaves_critics_alone(rng):
    a = make_agent()
    before = param_digest(a.q1, a.q2, a.q1_target, a.q2_target)
    actor_update(a, random_batch(rng))
    assert param_digest(a.q1, a.q2, a.q1_target, a.q2_target) == before


def test_auto_entropy_moves_log_alpha(rng):
    a = make_agent(entropy_mode="auto", alpha_ent=1.0)
    la = a.log_alpha.copy()
    actor_update(a, random_batch(rng))
    assert a.log_alpha[0] != la[0]
    assert a.target_entropy == -2.0


# -- polyak -------------------------------------------------------------------------

def test_polyak_tau_one_and_zero():
    a = make_agent()
    a.q1.flat[:] += 1.0
    polyak(a, 0.0)
    assert not np.array_equal(a.q1.flat, a.q1_target.flat)
    keep = a.q1_target.flat.copy()
    polyak(a, 0.0)
    assert np.array_equal(a.q1_target.flat, keep)
    polyak(a, 1.0)
    assert np.array_equal(a.q1.flat, a.q1_target.flat)


def test_polyak_half_scalar():
    cfg = SacConfig(hidden=[], batch_size=1)
    a = SacAgent(1, 1, cfg, np.random.default_rng(0))
    a.q1 = MlpParams([2, 1], flat=np.full(3, 2.0))
    a.q1_target = MlpParams([2, 1], flat=np.zeros(3))
    polyak(a, 0.5)
    assert np.array_equal(a.q1_target.flat, np.ones(3))


def test_target_lag_geometric_average():
    cfg = SacConfig(hidden=[], batch_size=1)
    a = SacAgent(1, 1, cfg, np.random.default_rng(0))
    tau = 0.1
    history = [float(a.q1_target.flat[0])]
    online = [float(a.q1.flat[0])]
    for k in range(6):
        a.q1.flat[0] = 0.5 * k - 1.0
        online.append(float(a.q1.flat[0]))
        polyak(a, tau)
    n = 6
    want = (1 - tau) ** n * history[0] + sum(tau * (1 - tau) ** (n - 1 - k) * online[k + 1] for k in range(n))
    assert a.q1_target.flat[0] == pytest.approx(want, abs=1e-12)


# -- act ----------------------------------------------------------------------------

def test_act_zero_policy_deterministic():
    a = make_agent()
    a.policy.flat[:] = 0.0
    assert np.array_equal(act(a, np.ones(3), deterministic=True), np.zeros(2))


def test_act_deterministic_is_small_std_limit(rng):
    a = make_agent()
    s = rng.normal(size=3)
    a.policy.biases[-1][2:] = -30.0  # log_std clamps at -20
    a.policy.weights[-1][2:] = 0.0
    det = act(a, s, deterministic=True)
    sto = act(a, s, noise=rng.normal(size=2))
    assert np.allclose(det, sto, atol=1e-7)


def test_act_same_noise_same_action(rng):
    a = make_agent()
    s, n = rng.normal(size=3), rng.normal(size=2)
    assert np.array_equal(act(a, s, noise=n), act(a, s, noise=n))
    with pytest.raises(ContractError):
        act(a, np.zeros(4), deterministic=True)
