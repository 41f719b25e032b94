import numpy as np
import pytest

from arlab.arl import ArlConfig, ArlTrainer, adversary_reward, plain_sac, random_adversary_action
from arlab.envs.disentangle import DisentangleEnv
from arlab.envs.maze import MazeEnv, parse_maze
from arlab.errors import ConfigError, DivergenceError
from arlab.nn import param_digest
from arlab.sac import SacAgent, SacConfig, soft_value

from conftest import OPEN_MAZE

SMALL = SacConfig(hidden=[8], batch_size=8, buffer_capacity=10_000)


def maze_env():
    return MazeEnv(parse_maze(OPEN_MAZE))


def trainer(N=1, K_A=2, K_P=2, H_A=5, H_P=7, kind="learned", seed=0, early=False, sac=SMALL, env=None):
    cfg = ArlConfig(N=N, K_A=K_A, K_P=K_P, H_A=H_A, H_P=H_P, adversary_kind=kind, early_termination=early)
    return ArlTrainer(env or maze_env(), cfg, sac, seed=seed)


def test_config_invariants():
    with pytest.raises(ConfigError):
        ArlConfig(adversary_kind="none", H_A=3).validate()
    with pytest.raises(ConfigError):
        ArlConfig(K_A=0).validate()
    with pytest.raises(ConfigError):
        ArlConfig(H_A=-1).validate()
    with pytest.raises(ConfigError):
        ArlConfig(adversary_kind="other").validate()
    ArlConfig(adversary_kind="none", H_A=0).validate()


def test_adversary_reward_is_negated_soft_value_bit_exact():
    rng = np.random.default_rng(0)
    agent = SacAgent(3, 2, SacConfig(hidden=[16, 16]), rng)
    agent.policy.flat[:] = rng.normal(size=agent.policy.flat.size) * 0.3
    for _ in range(1000):
        s, noise = rng.normal(size=3) * 3, rng.normal(size=2)
        assert adversary_reward(agent, s, noise) == -soft_value(agent, s, noise)


def test_adversary_reward_zero_critic():
    agent = SacAgent(2, 2, SacConfig(hidden=[4], alpha_ent=0.0, entropy_mode="fixed"), np.random.default_rng(0))
    agent.q1.flat[:] = 0.0
    agent.q2.flat[:] = 0.0
    assert adversary_reward(agent, np.ones(2), np.zeros(2)) == 0.0


def test_random_adversary_action_stats():
    rng = np.random.default_rng(9)
    a = np.array([random_adversary_action(rng, 2) for _ in range(100_000)])
    assert np.all((a > -1) & (a < 1))
    assert np.all(np.abs(a.mean(axis=0)) < 0.02)
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    assert np.array_equal(random_adversary_action(r1, 3), random_adversary_action(r2, 3))


def test_schedule_counts_spec_example():
    tr = trainer(N=2, K_A=3, K_P=4, H_A=5, H_P=7)
    tr.train()
    log = tr.log
    assert log.adversary_train_calls == 2 * 3 * 5
    assert log.protagonist_train_calls == 2 * 4 * 7
    assert log.adversary_insertions == 2 * 7 * 5
    assert log.protagonist_insertions == 2 * 7 * 7
    assert len(tr.D_A) == 70 and len(tr.D_P) == 98
    assert log.episodes == 14


def test_phase_separation_and_both_buffers_filled():
    tr = trainer(N=1, K_A=3, K_P=3, H_A=6, H_P=6, sac=SacConfig(hidden=[8], batch_size=4))
    for phase in tr.phases():
        adv = param_digest(*tr.adversary.networks().values())
        prot = param_digest(*tr.protagonist.networks().values())
        na, np_ = len(tr.D_A), len(tr.D_P)
        tr.run_episode(phase)
        assert len(tr.D_A) > na and len(tr.D_P) > np_
        if phase == "A":
            assert param_digest(*tr.protagonist.networks().values()) == prot
        else:
            assert param_digest(*tr.adversary.networks().values()) == adv
    assert tr.adversary.updates > 0 and tr.protagonist.updates > 0


def test_handoff_continuity():
    tr = trainer(H_A=4, H_P=3)
    for k, phase in enumerate(tr.phases()):
        rec = tr.run_episode(phase)
        last_adv = tr.D_A.contents()[-1]
        first_prot = tr.D_P.contents()[-3]
        assert np.array_equal(rec.handoff_state, last_adv.s_next)
        assert np.array_equal(first_prot.s, rec.handoff_state)


def test_zero_adversary_horizon_starts_at_reset_sample():
    tr = trainer(kind="none", H_A=0)
    for phase in tr.phases():
        rec = tr.run_episode(phase)
        assert np.array_equal(rec.handoff_state, rec.start_state)
        assert 3 <= rec.start_state[0] < 4 and 2 <= rec.start_state[1] < 3
    assert tr.log.adversary_insertions == 0


def test_random_adversary_records_rewards_without_training():
    tr = trainer(kind="random", H_A=5)
    assert tr.adversary is None
    tr.train()
    assert tr.log.adversary_train_calls == 0
    assert tr.log.adversary_insertions > 0
    assert np.any(tr.D_A.r[: len(tr.D_A)] != 0)


def test_success_suppressed_during_adversary_control():
    # reset cell is next to the goal; a wandering adversary must never end the episode by "success"
    tr = trainer(kind="random", H_A=30, H_P=1, N=3, K_A=1, K_P=5)
    tr.train()
    assert not np.any(tr.D_A.done[: len(tr.D_A)])


def test_adversary_collision_ends_episode():
    env = DisentangleEnv()
    cfg = ArlConfig(N=1, K_A=1, K_P=1, H_A=50, H_P=5, adversary_kind="random")
    tr = ArlTrainer(env, cfg, SacConfig(hidden=[8], batch_size=8), seed=1)
    causes = [tr.run_episode("P").cause for _ in range(40)]
    assert "adversary_collision" in causes
    done = tr.D_A.done[: len(tr.D_A)] > 0.5
    assert np.all(tr.D_A.r[: len(tr.D_A)][done] < -1.0 + 1e-12)


def test_fixed_seed_bit_identical_metrics():
    def rows(seed):
        out = []
        tr = trainer(N=2, H_A=5, H_P=7, seed=seed, early=True)
        tr.metrics_sink = out.append
        tr.train()
        return out

    assert rows(4) == rows(4)
    assert rows(4) != rows(5)


def test_none_kind_matches_plain_sac_loop():
    sac = SacConfig(hidden=[8], batch_size=8)
    a, b = [], []
    cfg = ArlConfig(N=3, K_A=2, K_P=2, H_A=0, H_P=15, adversary_kind="none")
    tr = ArlTrainer(maze_env(), cfg, sac, seed=11, metrics_sink=a.append)
    tr.train()
    agent = plain_sac(maze_env(), sac, 12, 15, seed=11, metrics_sink=b.append, episodes_per_iteration=4)
    assert a == b
    assert np.array_equal(agent.policy.flat, tr.protagonist.policy.flat)


def test_divergence_carries_iteration_and_episode(monkeypatch):
    tr = trainer(N=3)
    calls = {"n": 0}
    real = tr.run_episode

    def boom(phase):
        calls["n"] += 1
        if calls["n"] == 6:
            raise DivergenceError("non-finite critic loss")
        return real(phase)

    monkeypatch.setattr(tr, "run_episode", boom)
    with pytest.raises(DivergenceError) as e:
        tr.train()
    assert e.value.iteration == 1 and e.value.episode == 5
    assert "iteration=1, episode=5" in str(e.value)


def test_state_round_trip_resumes_bit_exactly():
    full = trainer(N=4, H_A=5, H_P=7, early=True, seed=2)
    full_rows = []
    full.metrics_sink = full_rows.append
    full.train()

    first = trainer(N=4, H_A=5, H_P=7, early=True, seed=2)
    rows = []
    first.metrics_sink = rows.append
    first.train(until_iteration=2)
    meta, arrays = first.state()
    resumed = trainer(N=4, H_A=5, H_P=7, early=True, seed=2)
    resumed.load_state(meta, {k: v.copy() for k, v in arrays.items()})
    resumed.metrics_sink = rows.append
    resumed.train()
    assert rows == full_rows
    assert param_digest(*resumed.protagonist.networks().values()) == param_digest(*full.protagonist.networks().values())
