"""Random network distillation on flattened latents.

A frozen random MLP is the target; a second MLP is regressed onto it by plain
gradient descent. The prediction error is the novelty signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tevir.latent import UsageError

HIDDEN = 64
OUTPUT = 32


@dataclass
class MlpParams:
    """Two-layer perceptron, tanh hidden layer, linear output."""

    w1: np.ndarray  # (in, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, out)
    b2: np.ndarray

    @classmethod
    def init(cls, n_in: int, rng: np.random.Generator, hidden: int = HIDDEN,
             n_out: int = OUTPUT) -> "MlpParams":
        a1 = 1.0 / np.sqrt(n_in)
        a2 = 1.0 / np.sqrt(hidden)
        return cls(
            rng.uniform(-a1, a1, (n_in, hidden)),
            rng.uniform(-a1, a1, hidden),
            rng.uniform(-a2, a2, (hidden, n_out)),
            rng.uniform(-a2, a2, n_out),
        )

    @classmethod
    def zeros(cls, n_in: int, hidden: int = HIDDEN, n_out: int = OUTPUT) -> "MlpParams":
        return cls(np.zeros((n_in, hidden)), np.zeros(hidden), np.zeros((hidden, n_out)),
                   np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_flat(self, v: np.ndarray) -> "MlpParams":
        shapes = [self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape]
        parts, i = [], 0
        for s in shapes:
            n = int(np.prod(s))
            parts.append(np.array(v[i:i + n]).reshape(s))
            i += n
        return MlpParams(*parts)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_in,):
        raise UsageError(f"input has shape {x.shape}, network expects ({params.n_in},)")
    return np.tanh(x @ params.w1 + params.b1) @ params.w2 + params.b2


def mse_and_grad(params: MlpParams, x: np.ndarray, target: np.ndarray):
    """Mean squared error against ``target`` and its gradient w.r.t. ``params``."""
    h = np.tanh(x @ params.w1 + params.b1)
    err = h @ params.w2 + params.b2 - target
    loss = float(np.mean(err ** 2))
    dp = 2.0 * err / err.size
    dh = (params.w2 @ dp) * (1.0 - h ** 2)
    grad = MlpParams(x[:, None] * dh, dh, h[:, None] * dp, dp)
    return loss, grad


class RndState:
    """Target/predictor pair plus running statistics of the raw error."""

    def __init__(self, n_in: int, seed: int = 0, learning_rate: float = 1e-4,
                 predictor: MlpParams | None = None):
        rng = np.random.default_rng(seed)
        self.target = MlpParams.init(n_in, rng)
        self.predictor = predictor if predictor is not None else MlpParams.init(n_in, rng)
        self.learning_rate = float(learning_rate)
        self.count = 0
        self.running_mean = 0.0
        self.running_var = 0.0
        self._m2 = 0.0
        self._target_cache: dict[bytes, np.ndarray] = {}

    @classmethod
    def copied(cls, n_in: int, seed: int = 0, **kw) -> "RndState":
        """Predictor starts as an exact copy of the target (zero error)."""
        st = cls(n_in, seed, **kw)
        st.predictor = st.target.copy()
        return st

    def target_output(self, x: np.ndarray) -> np.ndarray:
        key = x.tobytes()
        out = self._target_cache.get(key)
        if out is None:
            out = forward(self.target, x)
            out.setflags(write=False)
            if len(self._target_cache) < 500_000:
                self._target_cache[key] = out
        return out

    def raw_error(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.mean((forward(self.predictor, x) - self.target_output(x)) ** 2))

    def _observe(self, raw: float) -> None:
        # Welford update
        self.count += 1
        delta = raw - self.running_mean
        self.running_mean += delta / self.count
        self._m2 += delta * (raw - self.running_mean)
        self.running_var = self._m2 / self.count

    def intrinsic_reward(self, x) -> float:
        """Normalised novelty of ``x``; also folds the raw error into the stats."""
        raw = self.raw_error(x)
        self._observe(raw)
        return raw / np.sqrt(self.running_var + 1e-8)

    def train(self, x) -> float:
        """One gradient step of the predictor toward the target on ``x``."""
        x = np.asarray(x, dtype=np.float64)
        loss, g = mse_and_grad(self.predictor, x, self.target_output(x))
        self._apply(g)
        return loss

    def reward_and_train(self, x: np.ndarray) -> float:
        """:meth:`intrinsic_reward` then :meth:`train` on ``x``, sharing one forward pass."""
        loss, g = mse_and_grad(self.predictor, x, self.target_output(x))
        self._observe(loss)
        self._apply(g)
        return loss / np.sqrt(self.running_var + 1e-8)

    def _apply(self, g: MlpParams) -> None:
        if self.learning_rate:
            lr = self.learning_rate
            p = self.predictor
            p.w1 -= lr * g.w1
            p.b1 -= lr * g.b1
            p.w2 -= lr * g.w2
            p.b2 -= lr * g.b2


def intrinsic_reward(state: RndState, z) -> float:
    x = z.flatten() if hasattr(z, "flatten") and not isinstance(z, np.ndarray) else np.ravel(z)
    return state.intrinsic_reward(x)


def train(state: RndState, z) -> RndState:
    x = z.flatten() if hasattr(z, "flatten") and not isinstance(z, np.ndarray) else np.ravel(z)
    state.train(x)
    return state
