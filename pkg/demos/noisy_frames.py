"""
What Gaussian noise on the key frames does to the reward signal, and how a
controller that steers straight at the frames fares on the same noise.
"""

import numpy as np

from tevir import env as sim
from tevir.agent import default_reward_config
from tevir.baseline import run_follower
from tevir.reward import ProgressState, step_reward
from tevir.sequence import CorruptionSpec, corrupt, oracle_sequence

TASK = "reach"
state, z0 = sim.reset(TASK, seed=3)
clean = oracle_sequence(TASK, z0)
cfg = default_reward_config(TASK)
expert = sim.expert_rollout(TASK, state)

## Noisy copies of the same sequence
flat = clean.frames.reshape(clean.horizon, -1)
for snr in (None, 30.0, 20.0, 10.0):
    seq = clean if snr is None else corrupt(clean, CorruptionSpec("gaussian_snr", snr_db=snr))
    # how far each noisy frame drifts from its clean version
    noisy = seq.frames.reshape(seq.horizon, -1)
    drift = np.mean(np.sum(noisy * flat, 1)
                    / (np.linalg.norm(noisy, axis=1) * np.linalg.norm(flat, axis=1)))
    prog = ProgressState.start(seq)
    worst = 1.0
    for s in expert:
        br, prog = step_reward(sim.encode(s), seq, prog, cfg)
        worst = min(worst, br.r_dist)
    label = "clean" if snr is None else f"{snr:.0f} dB"
    print(f"{label:6s} frame cosine to clean {drift:.3f}   expert reaches M={prog.reached}/"
          f"{seq.horizon}, worst r_dist {worst:.3f}")

## A greedy frame follower, no learning, 10 episodes per noise level
for snr in (None, 20.0, 10.0):
    c = CorruptionSpec() if snr is None else CorruptionSpec("gaussian_snr", snr_db=snr)
    flags = run_follower(TASK, c, seed=0, episodes=10)
    label = "clean" if snr is None else f"{snr:.0f} dB"
    print(f"follower {label:6s} success {np.mean(flags):.1f}")
