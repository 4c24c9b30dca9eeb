"""Multi-view latent observations and the weighted cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

DEFAULT_VIEWS = ("left", "top", "close")
DEFAULT_DIM = 16
NORM_EPS = 1e-12


class UsageError(ValueError):
    """Raised when an operation is called with inconsistent arguments."""


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise UsageError(f"expected a 1-D latent vector, got shape {v.shape}")
    return v


def cosine(a, b) -> float:
    """Cosine similarity of two vectors; 0.0 when either has (near) zero norm."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise UsageError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class MultiViewLatent:
    """One observation: a ``(P, D)`` array with one row per named view."""

    views: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        views = tuple(self.views)
        if data.ndim != 2 or data.shape[0] != len(views):
            raise UsageError(f"latent shape {data.shape} does not match {len(views)} views")
        if len(set(views)) != len(views):
            raise UsageError(f"duplicate view labels: {views}")
        if not np.all(np.isfinite(data)):
            raise UsageError("latent entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_dict(cls, per_view: Mapping[str, Sequence[float]]) -> "MultiViewLatent":
        views = tuple(per_view)
        return cls(views, np.stack([np.asarray(per_view[v], dtype=np.float64) for v in views]))

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __getitem__(self, view: str) -> np.ndarray:
        try:
            return self.data[self.views.index(view)]
        except ValueError:
            raise KeyError(view) from None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {v: self.data[i] for i, v in enumerate(self.views)}

    def flatten(self) -> np.ndarray:
        return self.data.reshape(-1)

    def scaled(self, factors: Mapping[str, float]) -> "MultiViewLatent":
        f = np.array([factors.get(v, 1.0) for v in self.views])
        return MultiViewLatent(self.views, self.data * f[:, None])

    def __eq__(self, other):
        if not isinstance(other, MultiViewLatent):
            return NotImplemented
        return self.views == other.views and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.views, self.data.tobytes()))

    def __repr__(self):
        return f"MultiViewLatent(views={self.views}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class ViewWeights:
    views: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        views = tuple(self.views)
        if values.shape != (len(views),):
            raise UsageError("one weight per view required")
        if len(set(views)) != len(views):
            raise UsageError(f"duplicate view labels: {views}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise UsageError("view weights must be finite and nonnegative")
        if not np.any(values > 0):
            raise UsageError("at least one view weight must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dict(cls, per_view: Mapping[str, float]) -> "ViewWeights":
        return cls(tuple(per_view), np.array([float(per_view[v]) for v in per_view]))

    @classmethod
    def uniform(cls, views: Sequence[str] = DEFAULT_VIEWS) -> "ViewWeights":
        return cls(tuple(views), np.ones(len(views)))

    def as_dict(self) -> dict[str, float]:
        return {v: float(w) for v, w in zip(self.views, self.values)}

    def without(self, view: str) -> "ViewWeights":
        """Same weights with ``view`` zeroed (raises if nothing positive is left)."""
        if view not in self.views:
            raise UsageError(f"unknown view {view!r}")
        vals = np.array(self.values)
        vals[self.views.index(view)] = 0.0
        return ViewWeights(self.views, vals)

    def __eq__(self, other):
        if not isinstance(other, ViewWeights):
            return NotImplemented
        return self.views == other.views and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.views, self.values.tobytes()))


def _check_views(a: MultiViewLatent, b: MultiViewLatent, w: ViewWeights) -> None:
    if a.views != b.views or a.views != w.views:
        raise UsageError(f"view sets differ: {a.views} / {b.views} / {w.views}")
    if a.data.shape != b.data.shape:
        raise UsageError(f"latent shapes differ: {a.data.shape} vs {b.data.shape}")


def multi_view_similarity(a: MultiViewLatent, b: MultiViewLatent, w: ViewWeights) -> float:
    """Weighted average of per-view cosine similarities."""
    _check_views(a, b, w)
    cos = np.array([cosine(a.data[i], b.data[i]) for i in range(len(a.views))])
    return float(np.dot(w.values, cos) / w.values.sum())


def frame_norms(frames: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("hpd,hpd->hp", frames, frames))


def view_cosines(z: np.ndarray, frames: np.ndarray, fn: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-view cosines between one ``(P, D)`` latent and ``(H, P, D)`` frames.

    Returns an ``(H, P)`` array. Vectorized twin of :func:`cosine`. ``fn`` may
    carry precomputed :func:`frame_norms`.
    """
    zn = np.sqrt(np.einsum("pd,pd->p", z, z))
    if fn is None:
        fn = frame_norms(frames)
    dots = np.einsum("hpd,pd->hp", frames, z)
    denom = fn * zn
    ok = (fn >= NORM_EPS) & (zn >= NORM_EPS)
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=ok)
    return np.clip(out, -1.0, 1.0)


def frame_similarities(z: np.ndarray, frames: np.ndarray, weights: np.ndarray,
                       fn: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted multi-view similarity of ``z`` against each of ``H`` frames."""
    return view_cosines(z, frames, fn) @ weights / weights.sum()
