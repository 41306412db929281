"""Continuous U-shaped maze with acceleration control and a sparse exit reward.

State is (x, y, v_x, v_y) with positions in the unit square. One wall hangs
from the top at mid-width, forcing a detour under it. The four actions add a
fixed acceleration along one axis; collisions cancel the offending axis motion
and zero that velocity component.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .intervals import IntervalBox


class Action(enum.IntEnum):
    ACCEL_UP = 0
    ACCEL_DOWN = 1
    ACCEL_LEFT = 2
    ACCEL_RIGHT = 3

    @property
    def direction(self) -> tuple[float, float]:
        return _DIRECTIONS[self]


_DIRECTIONS = {
    Action.ACCEL_UP: (0.0, 1.0),
    Action.ACCEL_DOWN: (0.0, -1.0),
    Action.ACCEL_LEFT: (-1.0, 0.0),
    Action.ACCEL_RIGHT: (1.0, 0.0),
}

ACTIONS = tuple(Action)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1] in position space."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 <= self.x1 and self.y0 <= self.y1):
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_interior(self, x: float, y: float) -> bool:
        return self.x0 < x < self.x1 and self.y0 < y < self.y1

    def overlaps_interior(self, other: "Rect") -> bool:
        return (
            max(self.x0, other.x0) < min(self.x1, other.x1)
            and max(self.y0, other.y0) < min(self.y1, other.y1)
        )

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1}

    @classmethod
    def from_dict(cls, d: dict) -> "Rect":
        return cls(float(d["x0"]), float(d["x1"]), float(d["y0"]), float(d["y1"]))


class MazeState(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass
class MazeConfig:
    v_max: float = 0.05
    accel: float = 0.025
    walls: list[Rect] = field(default_factory=lambda: [Rect(0.45, 0.55, 0.25, 1.0)])
    start: Rect = Rect(0.05, 0.15, 0.85, 0.95)
    exit: Rect = Rect(0.85, 1.0, 0.85, 1.0)
    max_steps: int = 400

    def __post_init__(self):
        domain = Rect(0.0, 1.0, 0.0, 1.0)
        for name, rect in [("start", self.start), ("exit", self.exit), *
                           [(f"wall[{i}]", w) for i, w in enumerate(self.walls)]]:
            if not (domain.contains(rect.x0, rect.y0) and domain.contains(rect.x1, rect.y1)):
                raise ValueError(f"{name} leaves the position domain: {rect}")
        for i, w in enumerate(self.walls):
            if w.overlaps_interior(self.start):
                raise ValueError(f"start region overlaps wall[{i}]")
            if w.overlaps_interior(self.exit):
                raise ValueError(f"exit region overlaps wall[{i}]")
        if self.v_max <= 0 or self.accel <= 0 or self.max_steps <= 0:
            raise ValueError("v_max, accel, max_steps must be positive")

    def to_dict(self) -> dict:
        return {
            "v_max": self.v_max,
            "accel": self.accel,
            "walls": [w.to_dict() for w in self.walls],
            "start": self.start.to_dict(),
            "exit": self.exit.to_dict(),
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MazeConfig":
        kwargs = dict(d)
        if "walls" in kwargs:
            kwargs["walls"] = [Rect.from_dict(w) for w in kwargs["walls"]]
        for key in ("start", "exit"):
            if key in kwargs:
                kwargs[key] = Rect.from_dict(kwargs[key])
        return cls(**kwargs)


def reset(cfg: MazeConfig, rng: np.random.Generator) -> MazeState:
    """Uniform position inside the start region, zero velocity."""
    x = rng.uniform(cfg.start.x0, cfg.start.x1)
    y = rng.uniform(cfg.start.y0, cfg.start.y1)
    return MazeState(x, y, 0.0, 0.0)


def _axis_blocked(cfg: MazeConfig, lo: float, hi: float, other: float, axis: int) -> bool:
    """Whether an axis-aligned move sweeping [lo, hi] crosses a wall interior.

    axis 0 = x motion at height `other`; axis 1 = y motion at column `other`.
    Touching a wall boundary is allowed; only interior entry blocks.
    """
    for w in cfg.walls:
        if axis == 0:
            if w.y0 < other < w.y1 and hi > w.x0 and lo < w.x1:
                return True
        else:
            if w.x0 < other < w.x1 and hi > w.y0 and lo < w.y1:
                return True
    return False


def step(cfg: MazeConfig, s: MazeState, a: Action) -> tuple[MazeState, float, bool]:
    """One dynamics step: returns (next state, reward, reached_exit).

    Collision handling is axis-separable: x motion is resolved first at the
    current height, then y motion at the resulting column. A blocked axis
    keeps its position and has its velocity zeroed.
    """
    dx, dy = a.direction
    vx = min(cfg.v_max, max(-cfg.v_max, s.vx + cfg.accel * dx))
    vy = min(cfg.v_max, max(-cfg.v_max, s.vy + cfg.accel * dy))

    nx = s.x + vx
    if nx < 0.0 or nx > 1.0 or _axis_blocked(cfg, min(s.x, nx), max(s.x, nx), s.y, axis=0):
        nx, vx = s.x, 0.0

    ny = s.y + vy
    if ny < 0.0 or ny > 1.0 or _axis_blocked(cfg, min(s.y, ny), max(s.y, ny), nx, axis=1):
        ny, vy = s.y, 0.0

    nxt = MazeState(nx, ny, vx, vy)
    if cfg.exit.contains(nx, ny):
        return nxt, 1.0, True
    return nxt, 0.0, False


def is_exit(cfg: MazeConfig, s: MazeState) -> bool:
    """Closed membership of the position in the exit rectangle."""
    return cfg.exit.contains(s.x, s.y)


def state_domain(cfg: MazeConfig) -> IntervalBox:
    """The 4-D box [0,1]^2 x [-v_max, v_max]^2 that the goal partition covers."""
    return IntervalBox(
        [0.0, 0.0, -cfg.v_max, -cfg.v_max],
        [1.0, 1.0, cfg.v_max, cfg.v_max],
    )


class MazeEnv:
    """Stateful wrapper adding episode step accounting on top of the pure dynamics."""

    def __init__(self, cfg: MazeConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.state = MazeState(0.0, 0.0, 0.0, 0.0)
        self.t = 0

    def reset(self) -> MazeState:
        self.state = reset(self.cfg, self.rng)
        self.t = 0
        return self.state

    def step(self, a: Action) -> tuple[MazeState, float, bool, bool]:
        """Returns (state, reward, done, reached_exit); done includes the step cap."""
        self.state, reward, reached = step(self.cfg, self.state, a)
        self.t += 1
        done = reached or self.t >= self.cfg.max_steps
        return self.state, reward, done, reached
