"""Greedy frame-following controller: plans directly on the key frames.

No learning and no reward. At each step it finds the key frame nearest to the
current observation, aims at the next one, and takes the action whose
one-step change of the latent points most nearly at that frame. The one-step
lookahead uses the simulator, standing in for a perfect inverse-dynamics
model, so any failure comes from the frames themselves.
"""

from __future__ import annotations

import numpy as np

from tevir import env as sim
from tevir.agent import ACTIONS, RunSpec, _episode_seed, make_sequence_provider
from tevir.latent import frame_similarities
from tevir.sequence import CorruptionSpec, GeneratedSequence


def _direction_score(disp: np.ndarray, want: np.ndarray, w: np.ndarray) -> float:
    a = np.linalg.norm(disp, axis=1)
    b = np.linalg.norm(want, axis=1)
    ok = (a > 1e-12) & (b > 1e-12)
    cos = np.zeros(len(w))
    cos[ok] = np.einsum("pd,pd->p", disp[ok], want[ok]) / (a[ok] * b[ok])
    return float(cos @ w)


def follow_action(task, state: sim.EnvState, seq: GeneratedSequence, w: np.ndarray) -> int:
    """Index into :data:`ACTIONS` chosen by the follower in ``state``."""
    z = sim.encode_array(state)
    sims = frame_similarities(z, seq.frames, w)
    k = len(sims) - 1 - int(np.argmax(sims[::-1]))
    want = seq.frames[min(k + 1, seq.horizon - 1)] - z
    best, best_score = 0, -np.inf
    for i, a in enumerate(ACTIONS):
        disp = sim.encode_array(sim.transition(task, state, a)) - z
        score = _direction_score(disp, want, w)
        if score > best_score + 1e-12:
            best, best_score = i, score
    return best


def run_follower(task_id: str, corruption: CorruptionSpec = CorruptionSpec(), seed: int = 0,
                 episodes: int = 30, horizon: int = 8,
                 episode_length: int = sim.DEFAULT_HORIZON) -> list[bool]:
    """Success flag per episode, each from its own reset and sequence draw."""
    task = sim.get_task(task_id)
    spec = RunSpec(task.task_id, "tevir", seed, 1, corruption=corruption, horizon=horizon)
    provide = make_sequence_provider(spec)
    w = np.asarray(task.weights, dtype=float)
    out = []
    for ep in range(episodes):
        state, z = sim.reset(task, _episode_seed(seed + 10_000, ep))
        seq = provide(z, ep)
        success = False
        for _ in range(episode_length):
            a = follow_action(task, state, seq, w)
            state, _, sparse, done = sim.step(state, ACTIONS[a], episode_length)
            if sparse:
                success = True
            if done:
                break
        out.append(success)
    return out
