"""
Train the tabular learner on open_drawer three ways and watch the rolling
success rate: the environment's sparse signal alone, the dense reward alone,
and both together.
"""

import numpy as np

from tevir.agent import AgentConfig, RunSpec, train_run

TASK, STEPS, SEED = "open_drawer", 150_000, 0
agent = AgentConfig(learning_rate=0.5, centering=0.01, replay_sweeps=1)


def sparkline(values, width=50):
    bars = " .:-=+*#%@"
    idx = np.linspace(0, len(values) - 1, width).astype(int)
    return "".join(bars[int(v * (len(bars) - 1) + 0.5)] for v in np.asarray(values)[idx])


## One run per reward mode, same seed and budget
results = {}
for mode in ("sparse_only", "tevir", "tevir_plus"):
    results[mode] = train_run(RunSpec(TASK, mode, SEED, STEPS, agent=agent, eval_every=20))

## Rolling success over 20 episodes, left to right in steps
for mode, res in results.items():
    s = [p.success_rolling20 for p in res.curve]
    print(f"{mode:12s} |{sparkline(s)}| final {res.final_success:.2f}  "
          f"steps to 0.5: {res.steps_to(0.5)}")

## Where episodes end up on the key-frame sequence
# sparse_only never consults the frames, so its M is always 0
for mode, res in results.items():
    tail = res.M_final[-50:]
    print(f"{mode:12s} mean M over the last 50 episodes: {sum(tail) / len(tail):.2f}")

## The dense terms the learner actually saw, averaged over the last window
for mode in ("tevir", "tevir_plus"):
    p = results[mode].curve[-1]
    print(f"{mode:12s} r_dist {p.r_dist_mean:.3f}  r_prog {p.r_prog_mean:.3f}  "
          f"r_expl {p.r_expl_mean:.4f}")
