"""
How the dense reward responds to an expert, a random policy and a policy
that stalls two moves short of the goal.
"""

import numpy as np

from tevir import env as sim
from tevir.agent import default_reward_config
from tevir.reward import ProgressState, step_reward
from tevir.sequence import oracle_sequence

TASK = "open_drawer"

## A start state and the key frames conditioned on it
state, z0 = sim.reset(TASK, seed=4)
seq = oracle_sequence(TASK, z0)
cfg = default_reward_config(TASK)
print(seq)


def replay(states):
    prog = ProgressState.start(seq)
    rows = []
    for s in states:
        br, prog = step_reward(sim.encode(s), seq, prog, cfg)
        rows.append((br.r_dist, br.r_prog, br.h_star, br.reached_after))
    return np.array(rows)


## The scripted expert walks through every key frame
expert = sim.expert_rollout(TASK, state)
rows = replay(expert)
print("expert   steps=%d  min r_dist=%.3f  final M=%d  final r_prog=%.3f"
      % (len(expert), rows[:, 0].min(), rows[-1, 3], rows[-1, 1]))

## A random walk rarely gets past the first frames
rng = np.random.default_rng(0)
s = state
walk = [s]
for _ in range(len(expert) * 3):
    a = sim.EnvAction(*rng.choice([-0.05, 0.0, 0.05], 2), float(rng.integers(2)))
    s = sim.transition(TASK, s, a)
    walk.append(s)
rows = replay(walk)
print("random   steps=%d  mean r_dist=%.3f  final M=%d" % (len(walk), rows[:, 0].mean(), rows[-1, 3]))

## Stopping just short: high similarity, but no success
short = expert[:-2] + [expert[-3]] * 5
rows = replay(short)
print("stalled  last r_dist=%.3f  r_prog=%.3f  success=%s"
      % (rows[-1, 0], rows[-1, 1], sim.is_success(sim.get_task(TASK), short[-1])))

## Per-view agreement of the stalled state with the final frame
z = sim.encode_array(short[-1])
for v, a, b in zip(seq.views, z, seq.frames[-1]):
    print(f"  {v:6s} cosine {a @ b:.3f}")
