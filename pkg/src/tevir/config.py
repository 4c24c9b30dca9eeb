"""Experiment configuration files (YAML).

A config names a grid of runs (tasks x reward modes x seeds), the reward and
learner settings shared by them, and optionally a corruption sweep. Per-task
threshold and view weights default to the task registry and can be overridden
under ``task_params``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from tevir import env as sim
from tevir.agent import REWARD_MODES, AgentConfig, ConfigError, RunSpec
from tevir.latent import UsageError, ViewWeights
from tevir.reward import COMPONENTS, RewardConfig
from tevir.sequence import CORRUPTION_MODES, CorruptionSpec

VIEW_DROPS = tuple(f"view:{v}" for v in sim.DEFAULT_VIEWS)
DROP_TARGETS = COMPONENTS + VIEW_DROPS

_REWARD_KEYS = {"theta", "alpha", "explore_scale", "explore_clip", "weights", "drop"}
_AGENT_KEYS = {"gamma", "learning_rate", "epsilon_start", "epsilon_end", "epsilon_fraction",
               "bits_per_view", "levels_bits", "bucket_width", "centering",
               "replay_sweeps"}
_CORRUPTION_KEYS = {"mode", "snr_db", "error_fraction", "rng_seed"}
_TOP_KEYS = {"name", "tasks", "modes", "seeds", "steps", "horizon", "episode_length",
             "eval_every", "rnd_learning_rate", "sequence", "out", "reward", "agent",
             "task_params", "corruption", "baseline_episodes"}


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    name: str
    tasks: list[str]
    modes: list[str]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    steps: int = 100_000
    horizon: int = 8
    episode_length: int = sim.DEFAULT_HORIZON
    eval_every: int = 10
    rnd_learning_rate: float = 0.05
    sequence: str = "oracle"
    out: str = "runs"
    reward: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    task_params: dict = field(default_factory=dict)
    corruption: dict = field(default_factory=lambda: {"mode": "none"})
    baseline_episodes: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if not self.tasks:
            raise ConfigError("config needs at least one task")
        for t in self.tasks:
            if t not in sim.TASKS:
                raise ConfigError(f"unknown task {t!r}; registered: {sorted(sim.TASKS)}")
        for m in self.modes:
            if m not in REWARD_MODES:
                raise ConfigError(f"unknown reward mode {m!r}; expected one of {REWARD_MODES}")
        if not self.modes:
            raise ConfigError("config needs at least one reward mode")
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if int(self.steps) <= 0:
            raise ConfigError("step budget must be positive")
        if self.horizon < 2:
            raise ConfigError("sequence horizon must be at least 2")
        if self.episode_length <= 0 or self.eval_every <= 0:
            raise ConfigError("episode_length and eval_every must be positive")
        if not (self.sequence == "oracle" or self.sequence.startswith("file:")):
            raise ConfigError(f"sequence source must be 'oracle' or 'file:<path>', got {self.sequence!r}")
        for section, allowed in (("reward", _REWARD_KEYS), ("agent", _AGENT_KEYS),
                                 ("corruption", _CORRUPTION_KEYS)):
            extra = set(getattr(self, section)) - allowed
            if extra:
                raise ConfigError(f"unknown keys in {section}: {sorted(extra)}")
        for t, p in self.task_params.items():
            if t not in sim.TASKS:
                raise ConfigError(f"task_params names unknown task {t!r}")
            extra = set(p) - {"theta", "weights"}
            if extra:
                raise ConfigError(f"unknown keys in task_params.{t}: {sorted(extra)}")
        if self.corruption.get("mode", "none") not in CORRUPTION_MODES:
            raise ConfigError(f"unknown corruption mode {self.corruption.get('mode')!r}")
        # build every run spec once so bad values fail before anything runs
        try:
            for _, spec in self.run_specs():
                pass
        except ConfigError:
            raise
        except (UsageError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    # -- (de)serialisation ------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        extra = set(d) - _TOP_KEYS
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for key in ("name", "tasks", "modes"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        d = copy.deepcopy(d)
        d["tasks"] = [str(t) for t in _as_list(d["tasks"])]
        d["modes"] = [str(m) for m in _as_list(d["modes"])]
        if "seeds" in d:
            d["seeds"] = [int(s) for s in _as_list(d["seeds"])]
        for key in ("reward", "agent", "task_params", "corruption"):
            if key in d and d[key] is None:
                d[key] = {}
            if key in d and not isinstance(d[key], dict):
                raise ConfigError(f"{key} must be a mapping")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tasks": list(self.tasks),
            "modes": list(self.modes),
            "seeds": list(self.seeds),
            "steps": int(self.steps),
            "horizon": self.horizon,
            "episode_length": self.episode_length,
            "eval_every": self.eval_every,
            "rnd_learning_rate": self.rnd_learning_rate,
            "sequence": self.sequence,
            "out": self.out,
            "reward": copy.deepcopy(self.reward),
            "agent": copy.deepcopy(self.agent),
            "task_params": copy.deepcopy(self.task_params),
            "corruption": copy.deepcopy(self.corruption),
            "baseline_episodes": self.baseline_episodes,
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def with_seeds(self, seeds) -> "ExperimentConfig":
        d = self.to_dict()
        d["seeds"] = [int(s) for s in seeds]
        return ExperimentConfig.from_dict(d)

    # -- expansion into runs ----------------------------------------------

    def sweep(self) -> list[tuple[str, CorruptionSpec]]:
        """``(label, spec)`` per corruption setting; lists in the config fan out."""
        c = dict(self.corruption)
        mode = c.get("mode", "none")
        seed = int(c.get("rng_seed", 0))
        if mode == "none":
            return [("clean", CorruptionSpec())]
        if mode == "gaussian_snr":
            if "snr_db" not in c:
                raise ConfigError("gaussian_snr corruption needs snr_db")
            return [(f"snr{_fmt(v)}", CorruptionSpec(mode, snr_db=float(v), rng_seed=seed))
                    for v in _as_list(c["snr_db"])]
        if "error_fraction" not in c:
            raise ConfigError(f"{mode} corruption needs error_fraction")
        return [(f"err{_fmt(v)}", CorruptionSpec(mode, error_fraction=float(v), rng_seed=seed))
                for v in _as_list(c["error_fraction"])]

    def reward_config(self, task: str) -> RewardConfig:
        spec = sim.get_task(task)
        r = dict(self.reward)
        tp = self.task_params.get(task, {})
        theta = tp.get("theta", r.pop("theta", spec.theta))
        r.pop("theta", None)
        weights = tp.get("weights", r.pop("weights", None))
        r.pop("weights", None)
        if weights is None:
            weights = spec.weights
        if isinstance(weights, dict):
            w = ViewWeights.from_dict({v: float(weights.get(v, 0.0)) for v in sim.DEFAULT_VIEWS})
        else:
            weights = [float(x) for x in _as_list(weights)]
            if len(weights) != len(sim.DEFAULT_VIEWS):
                raise ConfigError(f"weights need {len(sim.DEFAULT_VIEWS)} entries")
            w = ViewWeights(sim.DEFAULT_VIEWS, np.array(weights))
        drop = tuple(r.pop("drop", ()) or ())
        return RewardConfig(weights=w, theta=float(theta), drop=drop,
                            **{k: float(v) for k, v in r.items()})

    def agent_config(self) -> AgentConfig:
        return AgentConfig(**self.agent)

    def run_specs(self, steps: Optional[int] = None) -> list[tuple[str, RunSpec]]:
        """Every run of the grid as ``(run_id, RunSpec)``, in a fixed order."""
        seq_file = self.sequence[5:] if self.sequence.startswith("file:") else None
        agent = self.agent_config()
        sweep = self.sweep()
        out = []
        for label, corruption in sweep:
            for task in self.tasks:
                reward = self.reward_config(task)
                for mode in self.modes:
                    for seed in self.seeds:
                        run_id = f"{task}__{mode}__seed{seed}"
                        if len(sweep) > 1 or label != "clean":
                            run_id = f"{label}/{run_id}"
                        out.append((run_id, RunSpec(
                            task, mode, int(seed), int(steps or self.steps), reward=reward,
                            agent=agent, corruption=corruption, horizon=self.horizon,
                            episode_length=self.episode_length,
                            rnd_learning_rate=self.rnd_learning_rate,
                            eval_every=self.eval_every, sequence_file=seq_file)))
        return out


def _fmt(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else str(v)


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    return ExperimentConfig.from_dict(data)


def load(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return loads(p.read_text())


def apply_drop(cfg: ExperimentConfig, drop: str) -> ExperimentConfig:
    """Copy of ``cfg`` with one reward component or view removed."""
    if drop not in DROP_TARGETS:
        raise ConfigError(f"unknown drop target {drop!r}; expected one of {DROP_TARGETS}")
    d = cfg.to_dict()
    d["name"] = f"{cfg.name}-no-{drop.replace(':', '-')}"
    if drop in COMPONENTS:
        d["reward"]["drop"] = sorted(set(d["reward"].get("drop", []) or []) | {drop})
    else:
        view = drop.split(":", 1)[1]
        for task in cfg.tasks:
            w = cfg.reward_config(task).weights.as_dict()
            w[view] = 0.0
            if not any(w.values()):
                raise ConfigError(f"dropping {view} leaves no view with positive weight on {task}")
            tp = d["task_params"].setdefault(task, {})
            tp["weights"] = [w[v] for v in sim.DEFAULT_VIEWS]
    return ExperimentConfig.from_dict(d)
