"""Planar manipulation tasks with multi-view feature observations.

The workspace is the unit square. Velocity commands are clipped per axis to
``MAX_SPEED`` and start states are drawn on a lattice of the same pitch, so the
gripper moves on a grid and tabular learners see a finite state space.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from tevir.latent import DEFAULT_DIM, DEFAULT_VIEWS, MultiViewLatent, UsageError

MAX_SPEED = 0.05
GRID = 0.05
GRASP_RADIUS = 0.03
CLOSED_APERTURE = 0.3
REACH_TOL = 0.02
DEFAULT_HORIZON = 100
_DECIMALS = 9


@dataclass(frozen=True)
class TaskSpec:
    """Static description of a task: object layout, success rule, start ranges.

    ``*_jitter`` values are in lattice cells; zero jitter gives a fixed start.
    """

    task_id: str
    kind: str  # "target" | "block" | "button" | "drawer"
    gripper_start: tuple[float, float]
    object_pos: tuple[float, float]
    gripper_jitter: int = 2
    object_jitter: int = 0
    goal_offset: tuple[float, float] = (0.0, 0.0)  # block goal relative to block start
    axis: tuple[float, float] = (0.0, 0.0)  # press / pull direction
    travel: float = 0.0
    success_articulation: float = 0.9
    theta: float = 0.8
    weights: tuple[float, float, float] = (0.5, 0.8, 0.4)

    @property
    def articulated(self) -> bool:
        return self.kind in ("button", "drawer")


TASKS: dict[str, TaskSpec] = {
    "reach": TaskSpec(
        "reach", "target", gripper_start=(0.15, 0.15), object_pos=(0.7, 0.6),
        weights=(0.5, 0.8, 0.4),
    ),
    "push_block": TaskSpec(
        "push_block", "block", gripper_start=(0.1, 0.3), object_pos=(0.45, 0.5),
        goal_offset=(0.25, 0.0), theta=0.9, weights=(0.2, 0.8, 0.2),
    ),
    "press_button": TaskSpec(
        "press_button", "button", gripper_start=(0.2, 0.2), object_pos=(0.55, 0.6),
        axis=(0.0, 1.0), travel=0.1, theta=0.9, weights=(0.5, 0.8, 0.4),
    ),
    "open_drawer": TaskSpec(
        "open_drawer", "drawer", gripper_start=(0.45, 0.35), object_pos=(0.75, 0.6),
        axis=(-1.0, 0.0), travel=0.25, success_articulation=0.75, weights=(0.5, 0.2, 0.7),
    ),
}


def get_task(task) -> TaskSpec:
    if isinstance(task, TaskSpec):
        return task
    try:
        return TASKS[task]
    except KeyError:
        raise UsageError(f"unknown task {task!r}; known: {sorted(TASKS)}") from None


@dataclass(frozen=True)
class EnvState:
    task_id: str
    gripper: tuple[float, float]
    aperture: float
    object_pos: tuple[float, float]  # block position, or base of target/button/drawer
    articulation: float = 0.0
    goal: tuple[float, float] = (0.0, 0.0)  # block target cell; unused otherwise
    held: Optional[str] = None
    t: int = 0

    def key(self) -> tuple:
        return (*self.gripper, self.aperture, *self.object_pos, self.articulation, *self.goal)


@dataclass(frozen=True)
class EnvAction:
    dx: float = 0.0
    dy: float = 0.0
    aperture: float = 1.0

    def clipped(self) -> "EnvAction":
        if not all(map(math.isfinite, (self.dx, self.dy, self.aperture))):
            raise UsageError("action entries must be finite")
        return EnvAction(_clamp(self.dx, -MAX_SPEED, MAX_SPEED),
                         _clamp(self.dy, -MAX_SPEED, MAX_SPEED),
                         _clamp(self.aperture, 0.0, 1.0))


def _clamp(x, lo: float, hi: float) -> float:
    return float(min(max(x, lo), hi))


def _r(x: float) -> float:
    return round(float(x), _DECIMALS)


def _clip_pos(p) -> tuple[float, float]:
    return (_r(min(max(p[0], 0.0), 1.0)), _r(min(max(p[1], 0.0), 1.0)))


def grasp_point(task: TaskSpec, state: EnvState) -> tuple[float, float]:
    """Where the gripper interacts with the task object."""
    if task.articulated:
        off = state.articulation * task.travel
        return _clip_pos((state.object_pos[0] + off * task.axis[0],
                          state.object_pos[1] + off * task.axis[1]))
    return state.object_pos


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def is_success(task: TaskSpec, state: EnvState) -> bool:
    task = get_task(task)
    if task.kind == "target":
        return _dist(state.gripper, state.object_pos) < REACH_TOL
    if task.kind == "block":
        return _dist(state.object_pos, state.goal) < REACH_TOL
    return state.articulation >= task.success_articulation


def _start(task: TaskSpec, g, obj) -> EnvState:
    goal = (0.0, 0.0)
    if task.kind == "block":
        goal = _clip_pos((obj[0] + task.goal_offset[0], obj[1] + task.goal_offset[1]))
    return EnvState(task.task_id, g, 1.0, obj, 0.0, goal)


def initial_state_support(task) -> list[EnvState]:
    """Every start state ``reset`` can produce, in a fixed order."""
    task = get_task(task)
    gj, oj = task.gripper_jitter, task.object_jitter
    out = []
    for ox in range(-oj, oj + 1):
        for oy in range(-oj, oj + 1):
            obj = _clip_pos((task.object_pos[0] + ox * GRID, task.object_pos[1] + oy * GRID))
            for gx in range(-gj, gj + 1):
                for gy in range(-gj, gj + 1):
                    g = _clip_pos((task.gripper_start[0] + gx * GRID,
                                   task.gripper_start[1] + gy * GRID))
                    out.append(_start(task, g, obj))
    return out


def sample_initial_state(task, seed: int) -> EnvState:
    task = get_task(task)
    rng = np.random.default_rng(seed)
    gj, oj = task.gripper_jitter, task.object_jitter
    ox, oy = rng.integers(-oj, oj + 1, size=2)
    gx, gy = rng.integers(-gj, gj + 1, size=2)
    obj = _clip_pos((task.object_pos[0] + ox * GRID, task.object_pos[1] + oy * GRID))
    g = _clip_pos((task.gripper_start[0] + gx * GRID, task.gripper_start[1] + gy * GRID))
    return _start(task, g, obj)


def transition(task, state: EnvState, action: EnvAction) -> EnvState:
    """Deterministic kinematics for one step (no horizon bookkeeping)."""
    task = get_task(task)
    a = action.clipped()
    aperture = a.aperture
    g = state.gripper
    obj = state.object_pos
    art = state.articulation
    held = None

    if task.articulated:
        gp = grasp_point(task, state)
        engaged = aperture < CLOSED_APERTURE and _dist(g, gp) <= GRASP_RADIUS
        along = a.dx * task.axis[0] + a.dy * task.axis[1]
        if engaged and (task.kind == "drawer" or along > 0):
            # motion is constrained to the joint axis while engaged
            new_art = min(max(art + along / task.travel, 0.0), 1.0)
            art = _r(new_art)
            g = grasp_point(task, replace(state, articulation=art))
            held = task.task_id if task.kind == "drawer" else None
        else:
            g = _clip_pos((g[0] + a.dx, g[1] + a.dy))
    elif task.kind == "block":
        new_g = _clip_pos((g[0] + a.dx, g[1] + a.dy))
        if (a.dx or a.dy) and _dist(new_g, obj) <= GRASP_RADIUS:
            new_obj = _clip_pos((obj[0] + a.dx, obj[1] + a.dy))
            moved = (new_obj[0] - obj[0], new_obj[1] - obj[1])
            # blocked by the wall: the gripper stops where the block stops
            new_g = _clip_pos((g[0] + moved[0], g[1] + moved[1]))
            obj = new_obj
        g = new_g
    else:
        g = _clip_pos((g[0] + a.dx, g[1] + a.dy))

    return EnvState(task.task_id, g, aperture, obj, art, state.goal, held, state.t + 1)


# ---------------------------------------------------------------------------
# Multi-view feature map
#
# Each view is a bank of (cos, sin) pairs of linear projections of a subset of
# the state, so the cosine between two encodings is the mean of
# cos(freq . delta) over the bank: a smooth, shift-invariant kernel.

_LEFT_PAIRS = 8
_TOP_PAIRS = 8
_CLOSE_PAIRS = 6
# per-coordinate frequency scales (radians per workspace unit)
_LEFT_SCALE = np.array([3.0, 3.0, 3.0, 3.0, 3.0, 2.1, 2.1])  # g, obj, art, goal
_TOP_GRIPPER_SCALE = 3.0
_TOP_OBJECT_SCALE = 12.0  # the object is resolved finely so its last move shows
_CLOSE_SCALE = 4.0  # radians per unit of the compressed offset
_CLOSE_NEAR = 0.1  # offsets much shorter than this are magnified
_APERTURE_PHASE = np.pi / 2
_ART_GAIN = 5.0  # the left view sees the mechanism's displacement times this


def _ring(n: int, offset: float) -> np.ndarray:
    phi = offset + np.arange(n) * np.pi / n
    return np.stack([np.cos(phi), np.sin(phi)], axis=1)


def _frequency_banks():
    rng = np.random.default_rng(7)
    left = rng.standard_normal((_LEFT_PAIRS, _LEFT_SCALE.size)) * _LEFT_SCALE
    # evenly spread directions make a kernel isotropic; the object ring is
    # rotated and interleaved so no pair sees gripper and object in step
    ring = _ring(_TOP_PAIRS, 0.0)
    perm = (np.arange(_TOP_PAIRS) * 3) % _TOP_PAIRS
    top = np.concatenate([_TOP_GRIPPER_SCALE * ring,
                          _TOP_OBJECT_SCALE * _ring(_TOP_PAIRS, 0.2)[perm]], axis=1)
    # one pair of the close bank is reserved for the aperture
    close = _CLOSE_SCALE * _ring(_CLOSE_PAIRS - 1, 0.3)
    return left, top, close


_LEFT_FREQ, _TOP_FREQ, _CLOSE_FREQ = _frequency_banks()


def _fourier(freq: np.ndarray, u: np.ndarray) -> np.ndarray:
    ph = freq @ u
    return np.concatenate([np.cos(ph), np.sin(ph)])


def _unit(v: np.ndarray) -> np.ndarray:
    out = np.zeros(DEFAULT_DIM)
    out[: v.size] = v
    return out / np.linalg.norm(out)


@functools.lru_cache(maxsize=200_000)
def _encode_key(task_id: str, key: tuple) -> np.ndarray:
    task = TASKS[task_id]
    gx, gy, ap, ox, oy, art, qx, qy = key
    state = EnvState(task_id, (gx, gy), ap, (ox, oy), art, (qx, qy))
    gp = grasp_point(task, state)
    left = _fourier(_LEFT_FREQ, np.array([gx, gy, ox, oy, art * task.travel * _ART_GAIN, qx, qy]))
    # articulation and the moving grasp point are masked from the top view
    top = _fourier(_TOP_FREQ, np.array([gx, gy, ox, oy]))
    rel = np.array([gp[0] - gx, gp[1] - gy])
    # near-field magnification: a close-up camera resolves small offsets finely
    # and far ones hardly at all
    rel = rel / (np.hypot(*rel) + _CLOSE_NEAR)
    close = np.concatenate([
        _fourier(_CLOSE_FREQ, rel),
        [np.cos(_APERTURE_PHASE * ap), np.sin(_APERTURE_PHASE * ap)],
    ])
    data = np.stack([_unit(left), _unit(top), _unit(close)])
    data.setflags(write=False)
    return data


def encode(state: EnvState) -> MultiViewLatent:
    """Encode a state as unit-norm ``left``/``top``/``close`` feature vectors.

    ``left`` sees every entity and articulation, ``top`` only planar base
    positions, ``close`` the object offset from the gripper plus aperture.
    """
    get_task(state.task_id)
    return MultiViewLatent(DEFAULT_VIEWS, _encode_key(state.task_id, state.key()))


def encode_array(state: EnvState) -> np.ndarray:
    """``(3, D)`` read-only array form of :func:`encode` for hot loops."""
    return _encode_key(state.task_id, state.key())


# ---------------------------------------------------------------------------
# Episode API


def reset(task, seed: int) -> tuple[EnvState, MultiViewLatent]:
    state = sample_initial_state(task, seed)
    return state, encode(state)


def step(state: EnvState, action: EnvAction, horizon: int = DEFAULT_HORIZON,
         terminate_on_success: bool = True) -> tuple[EnvState, MultiViewLatent, int, bool]:
    """Advance one step; returns ``(state, latent, sparse, done)``."""
    task = get_task(state.task_id)
    if state.t >= horizon or (terminate_on_success and is_success(task, state)):
        raise UsageError("episode is done; call reset")
    nxt = transition(task, state, action)
    sparse = int(is_success(task, nxt))
    done = nxt.t >= horizon or (terminate_on_success and bool(sparse))
    return nxt, encode(nxt), sparse, done


class ManipulationEnv:
    """Stateful wrapper around :func:`reset` / :func:`step`.

    With ``terminate_on_success=False`` episodes always run the full horizon,
    which is how the training harness uses it.
    """

    def __init__(self, task, horizon: int = DEFAULT_HORIZON, terminate_on_success: bool = True):
        self.task = get_task(task)
        self.horizon = horizon
        self.terminate_on_success = terminate_on_success
        self.state: Optional[EnvState] = None
        self.done = True

    def reset(self, seed: int) -> MultiViewLatent:
        self.state, z = reset(self.task, seed)
        self.done = False
        return z

    def step(self, action: EnvAction) -> tuple[MultiViewLatent, int, bool]:
        if self.done:
            raise UsageError("episode is done; call reset")
        self.state, z, sparse, self.done = step(
            self.state, action, self.horizon, self.terminate_on_success)
        return z, sparse, self.done


# ---------------------------------------------------------------------------
# Scripted experts


def _toward(src, dst) -> tuple[float, float]:
    dx, dy = round(dst[0] - src[0], 6), round(dst[1] - src[1], 6)
    if dx and dy and abs(dx) <= MAX_SPEED and abs(dy) <= MAX_SPEED:
        dy = 0.0  # the last step into contact is axis-aligned
    return _clamp(dx, -MAX_SPEED, MAX_SPEED), _clamp(dy, -MAX_SPEED, MAX_SPEED)


def scripted_expert(task, state: EnvState) -> EnvAction:
    """Phase-sequenced proportional controller: approach, engage, manipulate."""
    task = get_task(task)
    if is_success(task, state):
        return EnvAction(0.0, 0.0, state.aperture)
    g = state.gripper

    if task.kind == "target":
        return EnvAction(*_toward(g, state.object_pos), 1.0)

    if task.kind == "block":
        obj, goal = state.object_pos, state.goal
        push = (float(np.sign(round(goal[0] - obj[0], 6))), float(np.sign(round(goal[1] - obj[1], 6))))
        if push[0] and push[1]:
            push = (push[0], 0.0)  # one axis at a time
        behind = _clip_pos((obj[0] - GRID * push[0], obj[1] - GRID * push[1]))
        if _dist(g, behind) < REACH_TOL:
            return EnvAction(*_toward(obj, _clip_pos((obj[0] + GRID * push[0],
                                                       obj[1] + GRID * push[1]))), 1.0)
        v = _toward(g, behind)
        nxt = _clip_pos((g[0] + v[0], g[1] + v[1]))
        if _dist(nxt, obj) <= GRASP_RADIUS:
            # detour around the block instead of pushing it from the wrong side
            side = 1.0 if g[1] <= obj[1] and obj[1] + GRID <= 1.0 else -1.0
            if push[1]:
                v = (side * MAX_SPEED if g[0] <= obj[0] else -MAX_SPEED, 0.0)
            else:
                v = (0.0, -side * MAX_SPEED)
        return EnvAction(v[0], v[1], 1.0)

    gp = grasp_point(task, state)
    if _dist(g, gp) <= GRASP_RADIUS:
        return EnvAction(MAX_SPEED * task.axis[0], MAX_SPEED * task.axis[1], 0.0)
    return EnvAction(*_toward(g, gp), 1.0)


def expert_rollout(task, state: EnvState, horizon: int = DEFAULT_HORIZON) -> list[EnvState]:
    """States visited by the scripted expert until success (inclusive)."""
    task = get_task(task)
    states = [state]
    while not is_success(task, states[-1]):
        if states[-1].t >= horizon:
            raise RuntimeError(f"scripted expert failed on {task.task_id} from {state}")
        states.append(transition(task, states[-1], scripted_expert(task, states[-1])))
    return states
