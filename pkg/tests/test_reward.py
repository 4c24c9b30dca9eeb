"""Reward terms against a loop-based re-derivation from the definitions."""

import math

import numpy as np
import pytest

from conftest import random_latent, random_sequence, random_weights
from tevir.latent import MultiViewLatent, UsageError, ViewWeights, multi_view_similarity
from tevir.sequence import GeneratedSequence
from tevir.reward import (
    ProgressState,
    RewardConfig,
    RewardEngine,
    best_prefix_match,
    distance_reward,
    progress_reward,
    step_reward,
    update_reached,
)


def _cos(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return max(-1.0, min(1.0, sum(x * y for x, y in zip(a, b)) / (na * nb)))


def _sim(z, f, w):
    return sum(wi * _cos(z[i], f[i]) for i, wi in enumerate(w)) / sum(w)


def oracle_trace(frames, observations, w, theta, alpha, sparse=None):
    """Plain-Python replay of distance, progress and the reached count."""
    H = len(frames)
    M = 0
    out = []
    for t, z in enumerate(observations):
        sims = [_sim(z, frames[h], w) for h in range(H)]
        best_h, best = 0, sims[0]
        for h in range(1, max(M, 1)):
            if sims[h] >= best:  # later index wins ties
                best_h, best = h, sims[h]
        bonus = (1.0 if sims[H - 1] > theta else 0.0) if sparse is None else float(sparse[t])
        prog = alpha * best_h + bonus
        if M < H and sims[M] >= theta:
            M += 1
        out.append((best, prog, best_h, M))
    return out


def _trace_pair(rng, H, P, D, T=12):
    seq = random_sequence(rng, H, P, D)
    w = random_weights(rng, seq.views)
    obs = []
    for t in range(T):
        # walk near the frames so M actually advances
        k = min(t // 2, H - 1)
        obs.append(seq.frames[k] + rng.normal(0, rng.choice([0.05, 0.5, 2.0]), (P, D)))
    return seq, w, obs


def test_equation_conformance_random_pairs():
    rng = np.random.default_rng(0)
    for i in range(50):
        H = (2, 8)[i % 2]
        P = (1, 3)[(i // 2) % 2]
        seq, w, obs = _trace_pair(rng, H, P, 16)
        cfg = RewardConfig(weights=w, theta=0.8)
        want = oracle_trace(seq.frames.tolist(), [o.tolist() for o in obs], w.values.tolist(),
                            0.8, cfg.alpha)
        state = ProgressState.start(seq)
        for z, (d, p, h, M) in zip(obs, want):
            br, state = step_reward(MultiViewLatent(seq.views, z), seq, state, cfg)
            assert br.h_star == h and br.reached_after == M == state.reached
            assert abs(br.r_dist - d) <= 1e-12
            assert abs(br.r_prog - p) <= 1e-12


def test_engine_matches_functional_path():
    rng = np.random.default_rng(5)
    seq, w, obs = _trace_pair(rng, 8, 3, 16, T=20)
    cfg = RewardConfig(weights=w)
    eng = RewardEngine(cfg)
    eng.begin(seq)
    state = ProgressState.start(seq)
    for z in obs:
        a = eng.step(z, sparse=1)
        b, state = step_reward(MultiViewLatent(seq.views, z), seq, state, cfg, sparse=1)
        assert a == b


def test_prefix_ties_break_toward_last_index():
    rng = np.random.default_rng(2)
    f = rng.standard_normal((1, 4))
    seq = random_sequence(rng, 4, 1, 4)
    seq = GeneratedSequence(np.stack([f, f, f, -f]), seq.views, "reach")
    z = seq.frame(0)
    st = ProgressState(4, reached=3)
    h, s = best_prefix_match(z, seq, st, ViewWeights.uniform(seq.views))
    assert h == 2 and s == pytest.approx(1.0)


def test_rewards_use_state_before_update():
    rng = np.random.default_rng(3)
    seq = random_sequence(rng, 3, 2, 8)
    cfg = RewardConfig(weights=ViewWeights.uniform(seq.views), alpha=0.5)
    st = ProgressState.start(seq)
    br, st = step_reward(seq.frame(0), seq, st, cfg)
    assert br.h_star == 0 and st.reached == 1
    br, st = step_reward(seq.frame(1), seq, st, cfg)
    # frame 1 is not yet reached when the reward is computed
    assert br.h_star == 0 and st.reached == 2
    br, st = step_reward(seq.frame(1), seq, st, cfg)
    assert br.h_star == 1 and br.r_prog == pytest.approx(0.5)


def test_final_frame_bonus_versus_sparse_signal():
    rng = np.random.default_rng(4)
    seq = random_sequence(rng, 3, 1, 8)
    cfg = RewardConfig(weights=ViewWeights.uniform(seq.views), alpha=0.1)
    st = ProgressState(3, reached=3)
    z = seq.frame(2)
    assert progress_reward(z, seq, st, cfg) == pytest.approx(0.2 + 1.0)
    assert progress_reward(z, seq, st, cfg, sparse=0) == pytest.approx(0.2)
    assert distance_reward(z, seq, st, cfg) == pytest.approx(1.0)


def test_exactly_theta_advances_but_bonus_needs_strict_excess():
    seq_frames = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    seq = GeneratedSequence(seq_frames, ("a",), "reach")
    theta = 0.6
    z = MultiViewLatent(("a",), np.array([[theta, math.sqrt(1 - theta ** 2)]]))
    cfg = RewardConfig(weights=ViewWeights.uniform(("a",)), theta=theta)
    st = update_reached(z, seq, ProgressState(2), cfg)
    assert st.reached == 1
    sim = multi_view_similarity(z, seq.frame(1), cfg.weights)
    assert progress_reward(z, seq, ProgressState(2), cfg) == float(sim > theta)


def test_drop_zeroes_component_but_keeps_progress_tracking():
    rng = np.random.default_rng(6)
    seq = random_sequence(rng, 4, 1, 8)
    w = ViewWeights.uniform(seq.views)
    full = RewardConfig(weights=w)
    nodist = RewardConfig(weights=w, drop=("r_dist", "r_prog"))
    s1 = s2 = ProgressState.start(seq)
    for h in range(4):
        a, s1 = step_reward(seq.frame(h), seq, s1, full)
        b, s2 = step_reward(seq.frame(h), seq, s2, nodist)
        assert b.r_dist == 0.0 and b.r_prog == 0.0
        assert a.reached_after == b.reached_after


def test_mismatched_inputs_raise():
    rng = np.random.default_rng(7)
    seq = random_sequence(rng, 4, 2, 8)
    cfg = RewardConfig(weights=ViewWeights.uniform(seq.views))
    with pytest.raises(UsageError):
        step_reward(seq.frame(0), seq, ProgressState(5), cfg)
    with pytest.raises(UsageError):
        step_reward(random_latent(rng, seq.views, 4), seq, ProgressState(4), cfg)
    with pytest.raises(UsageError):
        RewardConfig(weights=cfg.weights, theta=0.0)
    with pytest.raises(UsageError):
        RewardConfig(weights=cfg.weights, drop=("r_bogus",))
    with pytest.raises(UsageError):
        RewardEngine(cfg).step(np.zeros((2, 8)))
