"""Acceptance criteria. Each test records one PASS/FAIL line, printed in the
"acceptance criteria" section at the end of the pytest run.

The learning experiments (4 to 8) run the YAML files under configs/ at their
full budgets and take most of an hour on one core.
"""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from tevir import config as cfgmod
from tevir.harness import ablate, run_suite

import test_env
import test_harness
import test_progress_properties
import test_reward
import test_rnd
import test_sequence

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TASKS = ("reach", "push_block", "press_button", "open_drawer")


def _record(n: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"


def _checks(fns) -> tuple[bool, str, float]:
    """Run check callables; returns (all passed, first failure, seconds)."""
    t0 = time.perf_counter()
    for fn in fns:
        try:
            fn()
        except AssertionError as e:
            return False, f"{getattr(fn, '__name__', fn)}: {e}", time.perf_counter() - t0
    return True, "", time.perf_counter() - t0


class Suites:
    """Runs each (config, drop) once per session and keeps the summaries."""

    def __init__(self, root: Path):
        self.root = root
        self.cache: dict = {}

    def get(self, name: str, drop: str = None, **override):
        key = (name, drop, tuple(sorted((k, repr(v)) for k, v in override.items())))
        if key not in self.cache:
            cfg = cfgmod.load(CONFIGS / f"exp_{name}.yaml")
            if override:
                d = cfg.to_dict()
                d.update(override)
                cfg = cfgmod.ExperimentConfig.from_dict(d)
            out = self.root / f"{name}-{drop or 'full'}-{len(self.cache)}"
            t0 = time.perf_counter()
            summary = ablate(cfg, drop, str(out)) if drop else run_suite(cfg, str(out))
            self.cache[key] = (summary, time.perf_counter() - t0)
        return self.cache[key]


@pytest.fixture(scope="session")
def suites(tmp_path_factory):
    return Suites(tmp_path_factory.mktemp("acceptance"))


def _runs(summary, task, mode, label="clean"):
    out = []
    for rid, stats in sorted(summary["runs"].items()):
        lab = rid.rpartition("/")[0] or "clean"
        if lab == label and stats["task"] == task and stats["mode"] == mode:
            out.append(stats)
    assert out, f"no runs for {label}/{task}/{mode}"
    return out


def _median(summary, task, mode, label="clean") -> float:
    return statistics.median(s["final_success"] for s in _runs(summary, task, mode, label))


def _steps(stats, key):
    v = stats[key]
    return math.inf if v is None else v


def _nonincreasing(xs) -> bool:
    return all(b <= a for a, b in zip(xs, xs[1:]))


def _fmt(xs) -> str:
    return "/".join(f"{x:.2f}" for x in xs)


# -- property criteria -------------------------------------------------------


def test_c01_equation_conformance():
    ok, err, dt = _checks([test_reward.test_equation_conformance_random_pairs])
    ok_t = dt < 5.0
    _record(1, "equation conformance", ok and ok_t,
            f"50 pairs vs loop oracle {'match' if ok else 'MISMATCH ' + err}, {dt:.2f}s (< 5s)")
    assert ok and ok_t


def test_c02_progress_invariants():
    ok, err, dt = _checks([test_progress_properties.test_reached_count_is_monotone_unit_step_and_bounded,
                           test_progress_properties.test_best_match_is_scale_invariant])
    _record(2, "progress invariants", ok,
            f"400 traces x 25 steps + 200 scale draws {'hold' if ok else 'violated: ' + err}")
    assert ok


def test_c03_expert_consistency():
    fns = [lambda t=t: test_env.test_expert_consistency_against_own_sequence(t) for t in TASKS]
    ok, err, dt = _checks(fns)
    ok_t = dt < 30.0
    _record(3, "expert consistency", ok and ok_t,
            f"4 tasks x 20 seeds reach M=H with r_dist >= theta {'yes' if ok else 'NO ' + err}, "
            f"{dt:.1f}s (< 30s)")
    assert ok and ok_t


def test_c09_rnd_numerics():
    fns = [test_rnd.test_gradient_matches_central_differences,
           *[lambda s=s: test_rnd.test_trained_states_are_less_novel(s) for s in range(5)],
           test_rnd.test_overfit_reduces_error_by_ninety_percent]
    ok, err, _ = _checks(fns)
    _record(9, "RND numerics", ok,
            "finite differences < 1e-4, novelty over 5 seeds, overfit >= 90%"
            + ("" if ok else f" FAILED {err}"))
    assert ok


def test_c10_round_trips(tmp_path):
    rng = np.random.default_rng(0)
    fns = [lambda: test_sequence.test_save_load_save_is_byte_identical(tmp_path / "seq", rng),
           lambda: test_harness.test_config_round_trip_is_identity(tmp_path / "cfg"),
           lambda: test_harness.test_suite_writes_grid_and_is_byte_identical(tmp_path / "suite")]
    for p in ("seq", "cfg", "suite"):
        (tmp_path / p).mkdir()
    ok, err, _ = _checks(fns)
    _record(10, "format round trips", ok,
            "TVSEQ bytes, config identity, suite CSVs across thread counts"
            + ("" if ok else f" FAILED {err}"))
    assert ok


# -- learning experiments ----------------------------------------------------


def test_c04_sample_efficiency(suites):
    summary, dt = suites.get("sparse_vs_tevirplus")
    plus = _runs(summary, "open_drawer", "tevir_plus")
    sparse = _runs(summary, "open_drawer", "sparse_only")
    m_plus, m_sparse = _median(summary, "open_drawer", "tevir_plus"), \
        _median(summary, "open_drawer", "sparse_only")
    faster = all(_steps(p, "steps_to_0.9") < _steps(s, "steps_to_0.9")
                 for p, s in zip(plus, sparse)
                 if p["steps_to_0.9"] is not None and s["steps_to_0.9"] is not None)
    ok = m_plus > m_sparse and faster and dt < 600
    _record(4, "sample efficiency (open_drawer)", ok,
            f"median tevir_plus {m_plus:.2f} vs sparse_only {m_sparse:.2f}, "
            f"steps to 0.9 {[p['steps_to_0.9'] for p in plus]} vs "
            f"{[s['steps_to_0.9'] for s in sparse]}, {dt / 60:.1f} min (< 10)")
    assert ok


def test_c05_no_environment_reward(suites):
    summary, dt = suites.get("no_env_reward")
    meds = [_median(summary, t, "tevir") for t in TASKS]
    ok = all(m >= 0.8 for m in meds) and dt < 1200
    _record(5, "no environment reward", ok,
            f"median success {dict(zip(TASKS, meds))} (>= 0.8 each), {dt / 60:.1f} min (< 20)")
    assert ok


def test_c06_noise_trend(suites):
    summary, _ = suites.get("noise")
    clean, _ = suites.get("no_env_reward")
    labels = ("snr30", "snr20", "snr10")
    parts, ok = [], True
    for task in summary["config"]["tasks"]:
        meds = [_median(summary, task, "tevir", lab) for lab in labels]
        base = [statistics.median(summary["baseline"][lab][task].values()) for lab in labels]
        ok &= _nonincreasing(meds) and meds[1] >= 0.7 and base[1] <= 0.2
        parts.append(f"{task} clean {_median(clean, task, 'tevir'):.2f} then "
                     f"{_fmt(meds)}, follower {_fmt(base)}")
    _record(6, "noise trend (30/20/10 dB)", ok,
            "; ".join(parts) + " (monotone, >= 0.7 at 20 dB, follower <= 0.2 at 20 dB)")
    assert ok


def test_c07_erroneous_frames(suites):
    # zero error fraction is the clean grid, already run for criterion 5
    clean, _ = suites.get("no_env_reward")
    summary, _ = suites.get("errors", corruption={"mode": "irrelevant_frames",
                                                  "error_fraction": [0.125, 0.25]})
    parts, mono, positive = [], True, 0
    for task in TASKS:
        meds = [_median(clean, task, "tevir"),
                _median(summary, task, "tevir", "err0.125"),
                _median(summary, task, "tevir", "err0.25")]
        mono &= _nonincreasing(meds)
        positive += meds[1] > 0
        parts.append(f"{task} {_fmt(meds)}")
    ok = mono and positive >= 3
    _record(7, "erroneous frames (0/0.125/0.25)", ok,
            "; ".join(parts) + f" (monotone each, > 0 at 0.125 on {positive}/4, need 3)")
    assert ok


def test_c08_ablations(suites):
    full, _ = suites.get("no_env_reward")
    ref = cfgmod.load(CONFIGS / "exp_ablations.yaml").to_dict()
    for key in ("steps", "seeds", "agent", "reward", "horizon", "episode_length"):
        assert ref[key] == full["config"][key], f"ablation config differs in {key}"
    drawer = {"tasks": ["open_drawer"]}
    no_prog, _ = suites.get("ablations", "r_prog", **drawer)
    no_left, _ = suites.get("ablations", "view:left", **drawer)
    no_expl, _ = suites.get("ablations", "r_expl", tasks=["press_button"])
    m_full = _median(full, "open_drawer", "tevir")
    m_prog = _median(no_prog, "open_drawer", "tevir")
    m_left = _median(no_left, "open_drawer", "tevir")
    s_full = statistics.median(_steps(s, "steps_to_0.5")
                               for s in _runs(full, "press_button", "tevir"))
    s_expl = statistics.median(_steps(s, "steps_to_0.5")
                               for s in _runs(no_expl, "press_button", "tevir"))
    ok = m_prog < m_full and m_left < m_full and s_expl > s_full
    _record(8, "ablation directions", ok,
            f"open_drawer full {m_full:.2f}, no r_prog {m_prog:.2f}, no left view {m_left:.2f}; "
            f"press_button steps to 0.5 full {s_full} vs no r_expl {s_expl}")
    assert ok
