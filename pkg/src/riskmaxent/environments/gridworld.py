"""Continuous four-room gridworld with a directional slope.

The agent lives in the square [0, side]^2 minus a set of axis-aligned wall
rectangles. A step clips the chosen increment to +-max_step per axis, adds
a per-step stochastic slope displacement when the agent is inside the
slope region, and resolves collisions by segment/box intersection: the
agent is repositioned at the first intersection point, pushed back along
the incoming direction by PUSH_BACK so that repeated contacts stay strictly
in free space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..errors import InvalidState

PUSH_BACK = 0.01

_DIRECTIONS = {
    "N": np.array([0.0, 1.0]),
    "S": np.array([0.0, -1.0]),
    "E": np.array([1.0, 0.0]),
    "SE": np.array([1.0, -1.0]) / np.sqrt(2.0),
    "none": np.array([0.0, 0.0]),
}


@dataclass(frozen=True)
class SlopeSpec:
    """Stochastic drift: displacement ~ N(mean, std) along a compass direction,
    applied inside ``region`` ('upper-half' or 'full')."""

    direction: str = "none"
    region: str = "upper-half"
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown slope direction {self.direction!r}")
        if self.region not in ("upper-half", "full"):
            raise ValueError(f"unknown slope region {self.region!r}")

    @property
    def unit(self) -> np.ndarray:
        return _DIRECTIONS[self.direction]


@dataclass(frozen=True)
class GridworldConfig:
    name: str
    side: float = 2.0
    max_step: float = 0.2
    walls: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # rows x0,y0,x1,y1
    slope: SlopeSpec = field(default_factory=SlopeSpec)
    initial_region: Tuple[float, float, float, float] = (1.7, 1.7, 1.9, 1.9)

    def __post_init__(self):
        object.__setattr__(self, "walls", np.asarray(self.walls, dtype=np.float64).reshape(-1, 4))
        x0, y0, x1, y1 = self.initial_region
        if not (0 <= x0 <= x1 <= self.side and 0 <= y0 <= y1 <= self.side):
            raise ValueError("initial region must lie inside the domain")


def free_space_mask(config: GridworldConfig, points: np.ndarray) -> np.ndarray:
    """True where a point is inside the domain and outside every wall box."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    inside = np.all((pts >= 0.0) & (pts <= config.side), axis=1)
    if config.walls.shape[0]:
        w = config.walls
        in_wall = (
            (pts[:, None, 0] >= w[None, :, 0])
            & (pts[:, None, 0] <= w[None, :, 2])
            & (pts[:, None, 1] >= w[None, :, 1])
            & (pts[:, None, 1] <= w[None, :, 3])
        ).any(axis=1)
    else:
        in_wall = np.zeros(pts.shape[0], dtype=bool)
    return inside & ~in_wall


def reset(config: GridworldConfig, rng: np.random.Generator) -> np.ndarray:
    return reset_batch(config, 1, rng)[0]


def reset_batch(config: GridworldConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = config.initial_region
    return rng.uniform([x0, y0], [x1, y1], size=(n, 2))


def _in_slope_region(config: GridworldConfig, states: np.ndarray) -> np.ndarray:
    if config.slope.region == "full":
        return np.ones(states.shape[0], dtype=bool)
    return states[:, 1] >= config.side / 2.0


def _segment_box_hits(starts: np.ndarray, deltas: np.ndarray, boxes: np.ndarray):
    """First crossing into each box: parameter in (0, 1] (+inf if none), the
    entering axis, and the coordinate of the face that was hit."""
    n = starts.shape[0]
    m = boxes.shape[0]
    if m == 0:
        inf = np.full((n, 0), np.inf)
        return inf, np.zeros((n, 0), dtype=np.int64), inf.copy()
    axis_min = []
    axis_face = []
    for axis in range(2):
        s = starts[:, axis][:, None]
        d = deltas[:, axis][:, None]
        lo = boxes[:, axis][None, :]
        hi = boxes[:, axis + 2][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - s) / d
            t2 = (hi - s) / d
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        parallel = d == 0.0
        inside = (s >= lo) & (s <= hi)
        tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
        axis_min.append((tmin, tmax))
        axis_face.append(np.where(d > 0.0, lo, hi) + np.zeros_like(tmin))
    t_enter = np.maximum(axis_min[0][0], axis_min[1][0])
    t_exit = np.minimum(axis_min[0][1], axis_min[1][1])
    enter_axis = (axis_min[1][0] > axis_min[0][0]).astype(np.int64)
    face = np.where(enter_axis == 0, axis_face[0], axis_face[1])
    hit = (t_enter <= t_exit) & (t_enter > 0.0) & (t_enter <= 1.0) & (t_exit >= 0.0)
    return np.where(hit, t_enter, np.inf), enter_axis, face


def _border_hits(starts: np.ndarray, deltas: np.ndarray, side: float):
    """First crossing out of [0, side]^2: parameter in (0, 1] (+inf if none),
    the crossing axis, and the border coordinate."""
    n = starts.shape[0]
    t = np.full(n, np.inf)
    axis_out = np.zeros(n, dtype=np.int64)
    face = np.zeros(n)
    for axis in range(2):
        d = deltas[:, axis]
        s = starts[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_low = np.where(d < 0.0, (0.0 - s) / d, np.inf)
            t_high = np.where(d > 0.0, (side - s) / d, np.inf)
        t_axis = np.minimum(t_low, t_high)
        face_axis = np.where(t_high < t_low, side, 0.0)
        better = t_axis < t
        t = np.where(better, t_axis, t)
        axis_out = np.where(better, axis, axis_out)
        face = np.where(better, face_axis, face)
    valid = (t > 0.0) & (t <= 1.0)
    return np.where(valid, t, np.inf), axis_out, face


def step_batch(
    config: GridworldConfig,
    states: np.ndarray,
    actions: np.ndarray,
    slope_draws: Optional[np.ndarray] = None,
    check: bool = True,
) -> np.ndarray:
    """Advance a batch of states by clipped actions plus slope displacement.

    ``slope_draws`` are the pre-drawn N(mean, std) slope magnitudes, one per
    row (ignored outside the slope region); drawing them ahead of time keeps
    trajectory tapes reproducible regardless of batching.
    """
    s = np.atleast_2d(np.asarray(states, dtype=np.float64))
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if check and not np.all(free_space_mask(config, s)):
        raise InvalidState("step called from a state inside a wall or outside the border")
    d = np.clip(a, -config.max_step, config.max_step)
    if config.slope.direction != "none" and slope_draws is not None:
        mag = np.clip(np.asarray(slope_draws, dtype=np.float64), -config.max_step, config.max_step)
        mag = np.where(_in_slope_region(config, s), mag, 0.0)
        d = d + mag[:, None] * config.slope.unit[None, :]

    n = s.shape[0]
    t_wall_all, ax_wall_all, face_wall_all = _segment_box_hits(s, d, config.walls)
    if t_wall_all.shape[1]:
        best = np.argmin(t_wall_all, axis=1)
        rows = np.arange(n)
        t_wall = t_wall_all[rows, best]
        ax_wall = ax_wall_all[rows, best]
        face_wall = face_wall_all[rows, best]
    else:
        t_wall = np.full(n, np.inf)
        ax_wall = np.zeros(n, dtype=np.int64)
        face_wall = np.zeros(n)
    t_border, ax_border, face_border = _border_hits(s, d, config.side)

    border_first = t_border < t_wall
    t_hit = np.where(border_first, t_border, t_wall)
    ax_hit = np.where(border_first, ax_border, ax_wall)
    face_hit = np.where(border_first, face_border, face_wall)

    length = np.linalg.norm(d, axis=1)
    collided = np.isfinite(t_hit) & (length > 0.0)
    out = s + d
    if np.any(collided):
        idx = np.flatnonzero(collided)
        contact = s[idx] + t_hit[idx, None] * d[idx]
        # Reposition push-back inside the hit face: the blocked coordinate
        # lands exactly PUSH_BACK off the face, tangential progress is kept,
        # so repeated contacts still produce distinct states.
        cand = contact.copy()
        a = ax_hit[idx]
        sign = np.sign(d[idx, a])
        cand[np.arange(idx.size), a] = face_hit[idx] - sign * PUSH_BACK
        ok = free_space_mask(config, cand)
        out[idx[ok]] = cand[ok]
        # Corner cases (face push-back lands inside an overlapping box) fall
        # back to backing up along the incoming direction, which stays on the
        # already-validated segment.
        if not np.all(ok):
            bad = idx[~ok]
            travel = np.maximum(t_hit[bad] * length[bad] - PUSH_BACK, 0.0)
            out[bad] = s[bad] + (travel / length[bad])[:, None] * d[bad]
    return out


def step(
    config: GridworldConfig,
    state: np.ndarray,
    action: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Single-state step; draws the slope magnitude from ``rng`` if needed."""
    draws = None
    if config.slope.direction != "none":
        if rng is None:
            raise ValueError("this configuration has a slope; an rng is required")
        draws = np.array([rng.normal(config.slope.mean, config.slope.std)])
    return step_batch(config, state[None, :], action[None, :], draws)[0]


@dataclass(frozen=True)
class GoalTask:
    """Sparse task: reward 1 within ``radius`` of ``goal`` (inclusive), else 0."""

    config_name: str
    goal: Tuple[float, float]
    radius: float = 0.1

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("goal radius must be positive")


def task_reward(task: GoalTask, state: np.ndarray) -> int:
    d = np.linalg.norm(np.asarray(state, dtype=np.float64) - np.asarray(task.goal))
    return int(d <= task.radius)


def task_reward_batch(task: GoalTask, states: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(states - np.asarray(task.goal)[None, :], axis=-1)
    return (d <= task.radius).astype(np.float64)


def sample_goal(config: GridworldConfig, rng: np.random.Generator) -> Tuple[float, float]:
    """Uniform draw over free space by rejection."""
    for _ in range(10000):
        pt = rng.uniform(0.0, config.side, size=2)
        if free_space_mask(config, pt[None, :])[0]:
            return (float(pt[0]), float(pt[1]))
    raise RuntimeError("free space appears to be almost empty")
