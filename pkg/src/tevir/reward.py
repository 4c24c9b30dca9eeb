"""Distance, progress and exploration rewards against a generated sequence.

Progress is tracked by a per-episode count ``M`` of reached key frames. The
frame compared for advancing is the next unreached one, ``frames[M]``, so at
the start of an episode the first observation is matched against frame 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

import numpy as np

from tevir.latent import MultiViewLatent, UsageError, ViewWeights, frame_norms, frame_similarities
from tevir.sequence import GeneratedSequence

COMPONENTS = ("r_dist", "r_prog", "r_expl")
DEFAULT_ALPHA = 0.125
DEFAULT_THETA = 0.8


@dataclass(frozen=True)
class RewardConfig:
    weights: ViewWeights
    theta: float = DEFAULT_THETA
    alpha: float = DEFAULT_ALPHA
    explore_scale: float = 1.0
    explore_clip: float = 5.0
    drop: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise UsageError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.alpha > 0:
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if self.explore_scale < 0:
            raise UsageError("explore_scale must be nonnegative")
        if not self.explore_clip > 0:
            raise UsageError("explore_clip must be positive")
        unknown = set(self.drop) - set(COMPONENTS)
        if unknown:
            raise UsageError(f"unknown reward components {sorted(unknown)}")
        object.__setattr__(self, "drop", tuple(self.drop))

    @property
    def uses_exploration(self) -> bool:
        return self.explore_scale > 0 and "r_expl" not in self.drop


@dataclass(frozen=True)
class ProgressState:
    horizon: int
    reached: int = 0
    last_h_star: int = 0

    def __post_init__(self):
        if not 0 <= self.reached <= self.horizon:
            raise UsageError(f"reached count {self.reached} outside [0, {self.horizon}]")

    @classmethod
    def start(cls, seq: GeneratedSequence) -> "ProgressState":
        return cls(seq.horizon)


@dataclass(frozen=True)
class RewardBreakdown:
    r_dist: float
    r_prog: float
    r_expl: float
    r_total: float
    h_star: int
    reached_after: int


class ExplorationBonus(Protocol):
    def intrinsic_reward(self, x: np.ndarray) -> float: ...


def _check(seq: GeneratedSequence, state: ProgressState) -> None:
    if state.horizon != seq.horizon:
        raise UsageError(f"progress state is for H={state.horizon}, sequence has H={seq.horizon}")


def _argmax_last(values: np.ndarray) -> int:
    """Index of the maximum; ties go to the largest index."""
    return len(values) - 1 - int(np.argmax(values[::-1]))


def _sims(z: MultiViewLatent, seq: GeneratedSequence, w: ViewWeights) -> np.ndarray:
    if z.views != seq.views or w.views != seq.views:
        raise UsageError(f"view sets differ: {z.views} / {seq.views} / {w.views}")
    if z.dim != seq.dim:
        raise UsageError(f"latent dimension {z.dim} does not match sequence dimension {seq.dim}")
    return frame_similarities(z.data, seq.frames, w.values)


def best_prefix_match(z: MultiViewLatent, seq: GeneratedSequence, state: ProgressState,
                      w: ViewWeights) -> tuple[int, float]:
    """Best-matching reached frame; frame 0 is always eligible."""
    _check(seq, state)
    sims = _sims(z, seq, w)[: max(state.reached, 1)]
    h = _argmax_last(sims)
    return h, float(sims[h])


def distance_reward(z, seq, state, config: RewardConfig) -> float:
    return best_prefix_match(z, seq, state, config.weights)[1]


def progress_reward(z, seq, state, config: RewardConfig, sparse: Optional[int] = None) -> float:
    """``alpha * h*`` plus a completion term: the final-frame match, or ``sparse``."""
    h, _ = best_prefix_match(z, seq, state, config.weights)
    if sparse is None:
        final = _sims(z, seq, config.weights)[-1]
        return config.alpha * h + float(final > config.theta)
    return config.alpha * h + float(sparse)


def update_reached(z, seq, state: ProgressState, config: RewardConfig) -> ProgressState:
    _check(seq, state)
    M = state.reached
    if M >= seq.horizon:
        return state
    if _sims(z, seq, config.weights)[M] >= config.theta:
        return replace(state, reached=M + 1)
    return state


def _combine(sims: np.ndarray, state: ProgressState, config: RewardConfig,
             sparse: Optional[int], r_expl: float) -> tuple[RewardBreakdown, ProgressState]:
    M = state.reached
    prefix = sims[: max(M, 1)]
    h = _argmax_last(prefix)
    r_dist = float(prefix[h])
    bonus = float(sims[-1] > config.theta) if sparse is None else float(sparse)
    r_prog = config.alpha * h + bonus
    if "r_dist" in config.drop:
        r_dist = 0.0
    if "r_prog" in config.drop:
        r_prog = 0.0
    if M < len(sims) and sims[M] >= config.theta:
        M += 1
    new_state = ProgressState(state.horizon, M, h)
    return RewardBreakdown(r_dist, r_prog, r_expl, r_dist + r_prog + r_expl, h, M), new_state


def _exploration(z: MultiViewLatent, config: RewardConfig, rnd) -> float:
    if not config.uses_exploration or rnd is None:
        return 0.0
    raw = rnd.intrinsic_reward(z.flatten())
    return float(min(max(config.explore_scale * raw, 0.0), config.explore_clip))


def step_reward(z: MultiViewLatent, seq: GeneratedSequence, state: ProgressState,
                config: RewardConfig, rnd=None,
                sparse: Optional[int] = None) -> tuple[RewardBreakdown, ProgressState]:
    """One step of the full reward: rewards use the state *before* the update.

    ``sparse`` switches the completion term to the environment signal.
    """
    _check(seq, state)
    sims = _sims(z, seq, config.weights)
    return _combine(sims, state, config, sparse, _exploration(z, config, rnd))


class RewardEngine:
    """Per-episode reward computation against one sequence.

    Holds the progress state; one instance per episode stream. The exploration
    module (if any) is shared across episodes and trained on every observation.
    """

    def __init__(self, config: RewardConfig, rnd=None):
        self.config = config
        self.rnd = rnd
        self.seq: Optional[GeneratedSequence] = None
        self.state: Optional[ProgressState] = None
        self._w = config.weights.values

    def begin(self, seq: GeneratedSequence) -> None:
        if seq.views != self.config.weights.views:
            raise UsageError(f"sequence views {seq.views} do not match weights")
        self.seq = seq
        self.state = ProgressState.start(seq)
        self._fn = frame_norms(seq.frames)

    def step(self, z: np.ndarray, sparse: Optional[int] = None) -> RewardBreakdown:
        """``z`` is a ``(P, D)`` latent array."""
        if self.seq is None:
            raise UsageError("call begin() with a sequence first")
        sims = frame_similarities(z, self.seq.frames, self._w, self._fn)
        r_expl = 0.0
        if self.config.uses_exploration and self.rnd is not None:
            raw = self.rnd.reward_and_train(z.reshape(-1))
            r_expl = float(min(max(self.config.explore_scale * raw, 0.0), self.config.explore_clip))
        out, self.state = _combine(sims, self.state, self.config, sparse, r_expl)
        return out
