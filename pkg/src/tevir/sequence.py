"""Generated key-frame sequences: oracle generation, TVSQ files, corruption."""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from tevir import env as sim
from tevir.latent import MultiViewLatent, UsageError, frame_similarities

MAGIC = b"TVSQ"
VERSION = 1
DEFAULT_HORIZON = 8
CORRUPTION_MODES = ("none", "gaussian_snr", "irrelevant_frames", "disordered_frames")


class FormatError(ValueError):
    """Malformed TVSQ data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GeneratedSequence:
    """``H`` multi-view key frames stored as an ``(H, P, D)`` array."""

    frames: np.ndarray
    views: tuple[str, ...]
    task_id: str

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1] != len(self.views):
            raise UsageError(f"frames shape {frames.shape} does not match views {self.views}")
        if frames.shape[0] < 2:
            raise UsageError("a sequence needs at least two frames")
        if not np.all(np.isfinite(frames)):
            raise UsageError("frames must be finite")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "views", tuple(self.views))

    @property
    def horizon(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[2]

    def frame(self, h: int) -> MultiViewLatent:
        return MultiViewLatent(self.views, self.frames[h])

    def frame_list(self) -> list[MultiViewLatent]:
        return [self.frame(h) for h in range(self.horizon)]

    @classmethod
    def from_frames(cls, frames, task_id: str) -> "GeneratedSequence":
        frames = list(frames)
        return cls(np.stack([f.data for f in frames]), frames[0].views, task_id)

    def __eq__(self, other):
        if not isinstance(other, GeneratedSequence):
            return NotImplemented
        return (self.views == other.views and self.task_id == other.task_id
                and np.array_equal(self.frames, other.frames))

    def __repr__(self):
        H, P, D = self.frames.shape
        return f"GeneratedSequence(task_id={self.task_id!r}, H={H}, P={P}, D={D})"


# ---------------------------------------------------------------------------
# Oracle provider


def decode_initial_state(task_id: str, observation: MultiViewLatent) -> sim.EnvState:
    """Recover the start state behind an observation by search over the task's
    start distribution; the closest encoding wins."""
    support, enc = _support_encodings(task_id)
    sims = frame_similarities(observation.data, enc, np.ones(len(observation.views)))
    return support[int(np.argmax(sims))]


@functools.lru_cache(maxsize=None)
def _support_encodings(task_id: str):
    support = sim.initial_state_support(task_id)
    return support, np.stack([sim.encode_array(s) for s in support])


def keyframe_indices(length: int, horizon: int) -> list[int]:
    """Evenly spaced indices into a trajectory of ``length + 1`` states."""
    return [int(np.floor(k * length / (horizon - 1) + 0.5)) for k in range(horizon)]


def oracle_sequence(task_id: str, initial_observation: MultiViewLatent,
                    horizon: int = DEFAULT_HORIZON,
                    initial_state: Optional[sim.EnvState] = None) -> GeneratedSequence:
    """Key frames from the scripted expert, conditioned on the first observation.

    Stands in for a text-to-video model: frame 0 is the given observation and the
    remaining frames sample the expert's rollout at evenly spaced progress.
    """
    task = sim.get_task(task_id)
    if horizon < 2:
        raise UsageError("horizon must be at least 2")
    state = initial_state if initial_state is not None else decode_initial_state(
        task.task_id, initial_observation)
    traj = sim.expert_rollout(task, state)
    idx = keyframe_indices(len(traj) - 1, horizon)
    frames = np.stack([sim.encode_array(traj[i]) for i in idx])
    frames[0] = initial_observation.data
    return GeneratedSequence(frames, initial_observation.views, task.task_id)


# ---------------------------------------------------------------------------
# TVSQ files (little-endian)


def sequence_to_bytes(seq: GeneratedSequence) -> bytes:
    H, P, D = seq.frames.shape
    out = [MAGIC, struct.pack("<HHHI", VERSION, H, P, D)]
    for v in seq.views:
        b = v.encode("utf-8")
        if len(b) > 255:
            raise UsageError(f"view label too long: {v!r}")
        out.append(struct.pack("<B", len(b)) + b)
    t = seq.task_id.encode("utf-8")
    out.append(struct.pack("<H", len(t)) + t)
    out.append(seq.frames.astype("<f4").tobytes())
    return b"".join(out)


def sequence_from_bytes(buf: bytes) -> GeneratedSequence:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated {what}: need {n} bytes, have {len(buf) - pos}", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    version, H, P, D = struct.unpack("<HHHI", take(10, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if H < 2 or P < 1 or D < 1:
        raise FormatError(f"invalid dimensions H={H} P={P} D={D}", 6)
    views = []
    for _ in range(P):
        (n,) = struct.unpack("<B", take(1, "view label length"))
        start = pos
        try:
            views.append(take(n, "view label").decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("view label is not UTF-8", start) from None
    if len(set(views)) != P:
        raise FormatError("duplicate view labels", pos)
    (n,) = struct.unpack("<H", take(2, "task id length"))
    start = pos
    try:
        task_id = take(n, "task id").decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("task id is not UTF-8", start) from None
    payload_at = pos
    payload = take(H * P * D * 4, "frame payload")
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", pos)
    frames = np.frombuffer(payload, dtype="<f4").reshape(H, P, D).astype(np.float64)
    if not np.all(np.isfinite(frames)):
        bad = int(np.flatnonzero(~np.isfinite(frames.reshape(-1)))[0])
        raise FormatError("non-finite frame value", payload_at + 4 * bad)
    return GeneratedSequence(frames, tuple(views), task_id)


def save_sequence(seq: GeneratedSequence, path: Union[str, Path]) -> None:
    """Write ``seq`` as TVSQ. Frame values are stored as float32."""
    Path(path).write_bytes(sequence_to_bytes(seq))


def load_sequence(path: Union[str, Path], expect_dim: Optional[int] = None,
                  expect_views: Optional[tuple[str, ...]] = None) -> GeneratedSequence:
    seq = sequence_from_bytes(Path(path).read_bytes())
    if expect_dim is not None and seq.dim != expect_dim:
        raise FormatError(f"dimension {seq.dim} does not match expected {expect_dim}", 10)
    if expect_views is not None and seq.views != tuple(expect_views):
        raise FormatError(f"views {seq.views} do not match expected {tuple(expect_views)}", 14)
    return seq


# ---------------------------------------------------------------------------
# Corruption


@dataclass(frozen=True)
class CorruptionSpec:
    mode: str = "none"
    snr_db: float = float("inf")
    error_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in CORRUPTION_MODES:
            raise UsageError(f"unknown corruption mode {self.mode!r}")
        if self.mode == "gaussian_snr" and not np.isfinite(self.snr_db):
            raise UsageError("gaussian_snr needs a finite snr_db")
        if not 0.0 <= self.error_fraction <= 1.0:
            raise UsageError("error_fraction must lie in [0, 1]")

    def count(self, horizon: int) -> int:
        """Number of frames hit by a frame-error mode (round half up)."""
        return min(int(np.floor(self.error_fraction * horizon + 0.5)), horizon - 1)


def corrupt(seq: GeneratedSequence, spec: CorruptionSpec,
            donor: Optional[GeneratedSequence] = None) -> GeneratedSequence:
    """Return a corrupted copy of ``seq``; frame 0 is never touched."""
    if spec.mode == "none":
        return seq
    rng = np.random.default_rng(spec.rng_seed)
    H = seq.horizon
    frames = np.array(seq.frames)

    if spec.mode == "gaussian_snr":
        signal_power = float(np.mean(seq.frames ** 2))
        noise_power = signal_power / 10.0 ** (spec.snr_db / 10.0)
        noise = rng.standard_normal(frames[1:].shape)
        # rescale so the realised noise power is exactly the requested one
        noise *= np.sqrt(noise_power / np.mean(noise ** 2))
        frames[1:] += noise
        return GeneratedSequence(frames, seq.views, seq.task_id)

    k = spec.count(H)
    if k == 0:
        return seq
    positions = rng.choice(np.arange(1, H), size=k, replace=False)

    if spec.mode == "irrelevant_frames":
        if donor is None:
            raise UsageError("irrelevant_frames needs a donor sequence from another task")
        if donor.task_id == seq.task_id:
            raise UsageError("donor must come from a different task")
        if donor.views != seq.views or donor.dim != seq.dim:
            raise UsageError("donor views/dimension differ from the sequence")
        picks = rng.integers(0, donor.horizon, size=k)
        frames[positions] = donor.frames[picks]
    else:  # disordered_frames: swap each chosen frame with another non-initial one
        for p in positions:
            others = np.array([q for q in range(1, H) if q != p])
            q = int(rng.choice(others))
            frames[[p, q]] = frames[[q, p]]
    return GeneratedSequence(frames, seq.views, seq.task_id)


def default_donor_task(task_id: str) -> str:
    """The task whose oracle frames serve as task-irrelevant donors."""
    names = sorted(sim.TASKS)
    return names[(names.index(task_id) + 1) % len(names)]
