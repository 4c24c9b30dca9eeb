"""Tabular Q-learning over hashed multi-view latents."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from tevir import env as sim
from tevir.latent import UsageError, ViewWeights
from tevir.reward import RewardConfig, RewardEngine
from tevir.rnd import RndState
from tevir.sequence import (
    CorruptionSpec,
    GeneratedSequence,
    corrupt,
    default_donor_task,
    oracle_sequence,
)

REWARD_MODES = ("sparse_only", "tevir", "tevir_plus")

_DIRECTIONS = [(0, 0), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
ACTIONS: tuple[sim.EnvAction, ...] = tuple(
    sim.EnvAction(dx * sim.MAX_SPEED, dy * sim.MAX_SPEED, ap)
    for dx, dy in _DIRECTIONS for ap in (1.0, 0.0)
)
N_ACTIONS = len(ACTIONS)


class ConfigError(UsageError):
    """A run configuration that cannot work (bad values, indistinguishable states)."""


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    learning_rate: float = 0.2
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.4
    bits_per_view: int = 12
    levels_bits: int = 1  # bits per projection
    bucket_width: float = 0.0  # 0 selects sign hashing
    centering: float = 0.0  # step size of the running average reward; 0 disables
    replay_sweeps: int = 0  # backward passes over each finished episode

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0 <= self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in [0, 1]")
        if not 0.05 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ConfigError("epsilon schedule must satisfy 0.05 <= end <= start <= 1")
        if not 0 <= self.centering <= 1:
            raise ConfigError("centering must lie in [0, 1]")
        if not 0 < self.epsilon_fraction <= 1:
            raise ConfigError("epsilon_fraction must lie in (0, 1]")

    def epsilon(self, step: int, total: int) -> float:
        ramp = self.epsilon_fraction * total
        if step >= ramp:
            return self.epsilon_end
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * step / ramp


class LatentHasher:
    """Random projections of each view packed into one int.

    The default is one sign bit per projection. With ``width > 0`` each
    projection is instead bucketed with that width (random phase) and the
    bucket index kept modulo ``2**levels_bits``, a finer partition.
    """

    def __init__(self, n_views: int, dim: int, bits: int = 12, seed: int = 0,
                 levels_bits: int = 1, width: float = 0.0):
        if levels_bits < 1 or bits % levels_bits:
            raise ConfigError("bits per view must be a positive multiple of levels_bits")
        if width < 0 or (width == 0 and levels_bits != 1):
            raise ConfigError("sign hashing (width 0) uses one bit per projection")
        if n_views * bits > 63:
            raise ConfigError("hash codes must fit in 63 bits")
        n_proj = bits // levels_bits
        rng = np.random.default_rng([seed, 0x5EED])
        self.proj = rng.standard_normal((n_views, n_proj, dim))
        self.width = float(width)
        self.offset = rng.uniform(0.0, width, (n_views, n_proj)) if width else None
        self._mask = (1 << levels_bits) - 1
        self._shift = (levels_bits * np.arange(n_views * n_proj)).astype(np.int64)

    def __call__(self, z: np.ndarray) -> int:
        x = np.einsum("pbd,pd->pb", self.proj, z)
        if self.offset is None:
            levels = (x > 0).astype(np.int64).reshape(-1)
        else:
            levels = np.floor((x + self.offset) / self.width).astype(np.int64).reshape(-1) & self._mask
        return int(np.bitwise_or.reduce(levels << self._shift))


class QTable(dict):
    """State code -> action values; unseen states read as zeros."""

    def values_for(self, code: int) -> np.ndarray:
        q = self.get(code)
        if q is None:
            q = np.zeros(N_ACTIONS)
            self[code] = q
        return q

    def peek(self, code: int) -> np.ndarray:
        q = self.get(code)
        return q if q is not None else np.zeros(N_ACTIONS)


def select_action(q: QTable, code: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy index; greedy ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q.peek(code)))


def update(q: QTable, s: int, a: int, r: float, s2: int, done: bool,
           gamma: float, lr: float) -> QTable:
    if not np.isfinite(r):
        raise UsageError("reward must be finite")
    row = q.values_for(s)
    target = r + (0.0 if done else gamma * float(np.max(q.peek(s2))))
    row[a] += lr * (target - row[a])
    return q


# ---------------------------------------------------------------------------
# Training runs


@dataclass
class RolloutTrace:
    task: str
    episode: int
    observations: list = field(default_factory=list)  # (P, D) lists
    actions: list = field(default_factory=list)
    r_dist: list = field(default_factory=list)
    r_prog: list = field(default_factory=list)
    r_expl: list = field(default_factory=list)
    reached: list = field(default_factory=list)
    sparse: list = field(default_factory=list)
    success: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CurvePoint:
    step: int
    episode: int
    success_rolling20: float
    r_dist_mean: float
    r_prog_mean: float
    r_expl_mean: float
    M_final: float


@dataclass
class RunResult:
    curve: list[CurvePoint]
    traces: list[RolloutTrace]
    episode_success: list[bool]
    episode_steps: list[int]
    M_final: list[int]
    q: Optional[QTable] = None
    hasher: Optional[LatentHasher] = None

    @property
    def final_success(self) -> float:
        return self.curve[-1].success_rolling20 if self.curve else 0.0

    def steps_to(self, level: float) -> Optional[int]:
        """First logged step at which rolling success reaches ``level``."""
        for p in self.curve:
            if p.success_rolling20 >= level:
                return p.step
        return None


@dataclass(frozen=True)
class RunSpec:
    """Everything a single training run depends on."""

    task: str
    mode: str
    seed: int
    steps: int
    reward: Optional[RewardConfig] = None
    agent: AgentConfig = AgentConfig()
    corruption: CorruptionSpec = CorruptionSpec()
    horizon: int = 8
    episode_length: int = sim.DEFAULT_HORIZON
    rnd_learning_rate: float = 0.05
    eval_every: int = 10
    sequence_file: Optional[str] = None
    keep_traces: int = 1


def default_reward_config(task: str, **overrides) -> RewardConfig:
    spec = sim.get_task(task)
    kw = dict(weights=ViewWeights(sim.DEFAULT_VIEWS, np.array(spec.weights)), theta=spec.theta)
    kw.update(overrides)
    return RewardConfig(**kw)


def _episode_seed(run_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([run_seed, episode]).generate_state(1)[0])


def check_expert_distinguishable(task: str, hasher: LatentHasher, horizon: int, seed: int) -> int:
    state = sim.sample_initial_state(task, seed)
    codes = {hasher(sim.encode_array(s)) for s in sim.expert_rollout(task, state)}
    if len(codes) < horizon:
        raise ConfigError(
            f"hashed expert trajectory on {task} visits {len(codes)} codes, fewer than H={horizon}")
    return len(codes)


def make_sequence_provider(spec: RunSpec) -> Callable[[sim.EnvState, int], GeneratedSequence]:
    """Returns ``provider(initial_latent, episode) -> sequence`` for ``spec``."""
    from tevir.sequence import load_sequence
    from tevir.latent import MultiViewLatent

    fixed = load_sequence(spec.sequence_file) if spec.sequence_file else None
    donor_task = default_donor_task(spec.task)

    def provide(z0: MultiViewLatent, episode: int) -> GeneratedSequence:
        seq = fixed if fixed is not None else oracle_sequence(spec.task, z0, spec.horizon)
        c = spec.corruption
        if c.mode == "none":
            return seq
        ep_seed = _episode_seed(c.rng_seed + spec.seed * 7919, episode)
        donor = None
        if c.mode == "irrelevant_frames":
            _, dz = sim.reset(donor_task, ep_seed)
            donor = oracle_sequence(donor_task, dz, seq.horizon)
        return corrupt(seq, CorruptionSpec(c.mode, c.snr_db, c.error_fraction, ep_seed), donor)

    return provide


def train_run(spec: RunSpec, progress: Optional[Callable[[CurvePoint], None]] = None) -> RunResult:
    """Train one agent; success is always read from the environment predicate."""
    if spec.mode not in REWARD_MODES:
        raise ConfigError(f"unknown reward mode {spec.mode!r}; expected one of {REWARD_MODES}")
    if spec.steps <= 0:
        raise ConfigError("step budget must be positive")
    task = sim.get_task(spec.task)
    reward_cfg = spec.reward or default_reward_config(task.task_id)
    ac = spec.agent
    views, dim = sim.DEFAULT_VIEWS, sim.DEFAULT_DIM

    hasher = LatentHasher(len(views), dim, ac.bits_per_view, spec.seed, ac.levels_bits,
                          ac.bucket_width)
    check_expert_distinguishable(task.task_id, hasher, spec.horizon, spec.seed)
    rng = np.random.default_rng([spec.seed, 1])
    q = QTable()
    environment = sim.ManipulationEnv(task, spec.episode_length, terminate_on_success=False)

    engine = None
    provide = None
    if spec.mode != "sparse_only":
        rnd = None
        if reward_cfg.uses_exploration:
            rnd = RndState(len(views) * dim, seed=spec.seed, learning_rate=spec.rnd_learning_rate)
        engine = RewardEngine(reward_cfg, rnd)
        provide = make_sequence_provider(spec)
    use_sparse = spec.mode == "tevir_plus"

    curve: list[CurvePoint] = []
    traces: list[RolloutTrace] = []
    ep_success: list[bool] = []
    ep_steps: list[int] = []
    m_final: list[int] = []
    comp_sums = np.zeros(3)
    comp_n = 0
    window_m: list[int] = []
    step = 0
    episode = 0
    r_bar = 0.0
    while step < spec.steps:
        z_obj = environment.reset(_episode_seed(spec.seed, episode))
        z = z_obj.data
        if engine is not None:
            engine.begin(provide(z_obj, episode))
            engine.step(z)  # frame 0 is matched against the first observation
        trace = None
        if spec.keep_traces and spec.steps - step <= spec.keep_traces * spec.episode_length:
            trace = RolloutTrace(task.task_id, episode)
            traces.append(trace)
        code = hasher(z)
        success = False
        episode_tr = []
        for t in range(spec.episode_length):
            eps = ac.epsilon(step, spec.steps)
            a = select_action(q, code, eps, rng)
            z2_obj, sparse, done = environment.step(ACTIONS[a])
            z2 = z2_obj.data
            if engine is None:
                r = float(sparse)
                br = None
            else:
                br = engine.step(z2, sparse if use_sparse else None)
                r = br.r_total
                comp_sums += (br.r_dist, br.r_prog, br.r_expl)
                comp_n += 1
            if trace is not None:
                trace.observations.append(z.tolist())
                trace.actions.append(a)
                trace.sparse.append(int(sparse))
                if br is not None:
                    trace.r_dist.append(br.r_dist)
                    trace.r_prog.append(br.r_prog)
                    trace.r_expl.append(br.r_expl)
                    trace.reached.append(br.reached_after)
            code2 = hasher(z2)
            # time-limit truncation is not termination: always bootstrap
            if ac.centering:
                r_bar += ac.centering * (r - r_bar)
            update(q, code, a, r - r_bar, code2, False, ac.gamma, ac.learning_rate)
            if ac.replay_sweeps:
                episode_tr.append((code, a, r - r_bar, code2))
            success = success or bool(sparse)
            code, z = code2, z2
            step += 1
            if done or step >= spec.steps:
                break
        for _ in range(ac.replay_sweeps):
            for s_, a_, r_, s2_ in reversed(episode_tr):
                update(q, s_, a_, r_, s2_, False, ac.gamma, ac.learning_rate)
        ep_success.append(success)
        if trace is not None:
            trace.success = success
        ep_steps.append(step)
        mf = engine.state.reached if engine is not None else 0
        m_final.append(mf)
        window_m.append(mf)
        episode += 1
        if episode % spec.eval_every == 0 or step >= spec.steps:
            means = comp_sums / comp_n if comp_n else np.zeros(3)
            point = CurvePoint(step, episode, float(np.mean(ep_success[-20:])),
                               float(means[0]), float(means[1]), float(means[2]),
                               float(np.mean(window_m)))
            curve.append(point)
            if progress is not None:
                progress(point)
            comp_sums[:] = 0
            comp_n = 0
            window_m = []
    return RunResult(curve, traces, ep_success, ep_steps, m_final, q, hasher)
