"""Mobility models: diagonal-waypoint location update and speed-capped Gauss-Markov."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import CellGrid, Position, distance


@dataclass(frozen=True)
class Velocity:
    vx: float
    vy: float

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class GaussMarkovParams:
    alpha: float = 0.75
    mean_speed: float = 10.0
    mean_direction: float = 0.0
    noise_std: float = 2.0
    v_max: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.v_max > 0:
            raise ValueError("v_max must be > 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def mean_velocity(self) -> Velocity:
        return Velocity(
            self.mean_speed * math.cos(self.mean_direction),
            self.mean_speed * math.sin(self.mean_direction),
        )


@dataclass(frozen=True)
class WaypointState:
    current: Position
    target: Position
    delta: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.delta[0] < 0 or self.delta[1] < 0:
            raise ValueError("waypoint offsets must be non-negative")


def cap_speed(v: Velocity, v_max: float) -> Velocity:
    s = v.speed
    if s <= v_max:
        return v
    k = v_max / s
    out = Velocity(v.vx * k, v.vy * k)
    # k*vx can round a hair above the cap.
    while out.speed > v_max:
        out = Velocity(math.nextafter(out.vx, 0.0), math.nextafter(out.vy, 0.0))
    return out


def gauss_markov_step(v: Velocity, p: GaussMarkovParams, dt: float, rng) -> Velocity:
    """v' = a*v + (1-a)*mean + sqrt(1-a^2)*noise, per component, then capped at v_max."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    a = p.alpha
    mean = p.mean_velocity
    scale = math.sqrt(1.0 - a * a)
    nx, ny = rng.normal(0.0, p.noise_std, size=2) if p.noise_std > 0 else (0.0, 0.0)
    out = Velocity(
        a * v.vx + (1.0 - a) * mean.vx + scale * nx,
        a * v.vy + (1.0 - a) * mean.vy + scale * ny,
    )
    return cap_speed(out, p.v_max)


def above_diagonal(prev: Position, l1: Position, l2: Position) -> bool:
    """True when ``prev`` lies on the left of the directed line l1 -> l2."""
    cross = (l2.x - l1.x) * (prev.y - l1.y) - (l2.y - l1.y) * (prev.x - l1.x)
    return cross > 0


def diagonal_waypoint_step(
    w: WaypointState, above: bool, rng, region: CellGrid | None = None
) -> Position:
    l1, l2 = w.current, w.target
    d = distance(l1, l2)
    if d == 0.0:
        x, y = l1.x, l1.y
    else:
        x = rng.uniform(min(l1.x, l2.x), max(l1.x, l2.x))
        y = rng.uniform(min(l1.y, l2.y), max(l1.y, l2.y))
    dx, dy = w.delta
    if above:
        x, y = x + dx, y + dy
    else:
        x, y = x - dx, y - dy
    out = Position(x, y, l1.z)
    return region.clamp(out) if region is not None else out
