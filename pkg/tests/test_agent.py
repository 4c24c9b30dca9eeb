import numpy as np
import pytest
from scipy import stats

from tevir import env as sim
from tevir.agent import (
    N_ACTIONS,
    AgentConfig,
    ConfigError,
    LatentHasher,
    QTable,
    RunSpec,
    check_expert_distinguishable,
    select_action,
    train_run,
    update,
)
from tevir.latent import UsageError
from tevir.sequence import CorruptionSpec


def test_epsilon_greedy_distribution_chi_square():
    rng = np.random.default_rng(0)
    q = QTable()
    q.values_for(7)[3] = 1.0
    eps, n = 0.3, 40_000
    counts = np.bincount([select_action(q, 7, eps, rng) for _ in range(n)], minlength=N_ACTIONS)
    p = np.full(N_ACTIONS, eps / N_ACTIONS)
    p[3] += 1 - eps
    _, pval = stats.chisquare(counts, n * p)
    assert pval > 1e-3


def test_greedy_ties_go_to_lowest_index():
    rng = np.random.default_rng(0)
    q = QTable()
    q.values_for(1)[[4, 9]] = 2.0
    assert select_action(q, 1, 0.0, rng) == 4
    assert select_action(q, 99, 0.0, rng) == 0  # unseen state: all zeros


def test_q_learning_recovers_two_state_chain_optimum():
    # s0 --a1--> s1 (r=0), s1 --a1--> s1 (r=1), a0 always returns to s0 (r=0)
    gamma = 0.9
    def step(s, a):
        if a == 1:
            return 1, float(s == 1)
        return 0, 0.0

    v = np.zeros(2)
    for _ in range(2000):
        qstar = np.array([[step(s, a)[1] + gamma * v[step(s, a)[0]] for a in (0, 1)]
                          for s in (0, 1)])
        v = qstar.max(1)

    q = QTable()
    for _ in range(3000):
        for s in (0, 1):
            for a in (0, 1):
                s2, r = step(s, a)
                update(q, s, a, r, s2, False, gamma, 0.5)
    learned = np.array([q.peek(s)[:2] for s in (0, 1)])
    assert np.allclose(learned, qstar, atol=1e-6)


def test_terminal_update_does_not_bootstrap():
    q = QTable()
    q.values_for(2)[:] = 100.0
    update(q, 1, 0, 1.0, 2, True, 0.99, 1.0)
    assert q.peek(1)[0] == 1.0
    with pytest.raises(UsageError):
        update(q, 1, 0, np.inf, 2, False, 0.99, 1.0)


def test_hasher_is_deterministic_and_separates_expert_states():
    h1 = LatentHasher(3, 16, 12, seed=5)
    h2 = LatentHasher(3, 16, 12, seed=5)
    s, z = sim.reset("reach", 0)
    assert h1(z.data) == h2(z.data)
    for task in sim.TASKS:
        assert check_expert_distinguishable(task, h1, 8, 0) >= 8


def test_hasher_validation():
    with pytest.raises(ConfigError):
        LatentHasher(3, 16, 10, levels_bits=3)
    with pytest.raises(ConfigError):
        LatentHasher(3, 16, 24, levels_bits=3)
    with pytest.raises(ConfigError):
        check_expert_distinguishable("reach", LatentHasher(3, 16, 1, levels_bits=1,
                                                           width=100.0), 8, 0)


@pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(learning_rate=1.5),
                                dict(epsilon_end=0.01), dict(centering=-0.1),
                                dict(epsilon_fraction=0.0)])
def test_agent_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        AgentConfig(**kw)


def test_epsilon_schedule_is_linear_then_flat():
    ac = AgentConfig(epsilon_start=1.0, epsilon_end=0.1, epsilon_fraction=0.5)
    assert ac.epsilon(0, 100) == 1.0
    assert ac.epsilon(25, 100) == pytest.approx(0.55)
    assert ac.epsilon(50, 100) == 0.1 and ac.epsilon(99, 100) == 0.1


@pytest.mark.parametrize("mode", ["sparse_only", "tevir", "tevir_plus"])
def test_short_runs_are_reproducible(mode):
    spec = RunSpec("press_button", mode, 3, 1500, eval_every=5)
    a, b = train_run(spec), train_run(spec)
    assert a.curve == b.curve
    assert a.episode_success == b.episode_success
    assert a.curve[-1].step == 1500
    if mode == "sparse_only":
        assert a.curve[-1].r_dist_mean == 0.0


def test_zero_error_fraction_trains_like_clean_frames():
    clean = train_run(RunSpec("reach", "tevir", 1, 5000))
    zero = train_run(RunSpec("reach", "tevir", 1, 5000,
                             corruption=CorruptionSpec("irrelevant_frames", error_fraction=0.0)))
    assert zero.curve == clean.curve


def test_trace_records_every_step():
    res = train_run(RunSpec("reach", "tevir", 0, 300, keep_traces=1))
    tr = res.traces[-1]
    n = len(tr.actions)
    assert n == len(tr.r_dist) == len(tr.reached) == len(tr.observations) > 0
    assert all(b - a in (0, 1) for a, b in zip(tr.reached, tr.reached[1:]))


def test_bad_run_specs():
    with pytest.raises(ConfigError):
        train_run(RunSpec("reach", "dense", 0, 10))
    with pytest.raises(ConfigError):
        train_run(RunSpec("reach", "tevir", 0, 0))
