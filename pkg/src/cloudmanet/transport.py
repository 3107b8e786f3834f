"""Direction entropy, entropy-driven velocities and throughput tables."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ScenarioConfig
from .world import World

DIRECTIONS = ("up", "down", "left", "right")
DEFAULT_T_GRID = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)


class EmptyWorld(ValueError):
    pass


class EmptyScenario(ValueError):
    pass


@dataclass(frozen=True)
class DirectionDistribution:
    p: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.p) != 4 or any(not 0.0 <= q <= 1.0 for q in self.p):
            raise ValueError("need four probabilities in [0, 1]")
        if abs(sum(self.p) - 1.0) > 1e-9:
            raise ValueError("direction probabilities must sum to 1")


UNIFORM = DirectionDistribution((0.25, 0.25, 0.25, 0.25))


@dataclass(frozen=True)
class ThroughputSample:
    device_count: int
    speed: float
    t: float
    value: float


def heading_class(world: World, i: int, window: int = 1) -> int | None:
    """Index into DIRECTIONS of the dominant axis of i's recent displacement.

    None when the device has not moved over the window.
    """
    trail = world.trail.get(i)
    if not trail or len(trail) < 2:
        return None
    back = min(window, len(trail) - 1)
    a, b = trail[-1 - back], trail[-1]
    dx, dy = b.x - a.x, b.y - a.y
    if dx == 0 and dy == 0:
        return None
    if abs(dy) > abs(dx):
        return 0 if dy > 0 else 1
    return 3 if dx > 0 else 2


def _distribution(classes) -> DirectionDistribution:
    counts = [0, 0, 0, 0]
    for c in classes:
        if c is not None:
            counts[c] += 1
    total = sum(counts)
    if total == 0:
        return UNIFORM
    return DirectionDistribution(tuple(c / total for c in counts))


def direction_probabilities(world: World, window: int = 1) -> DirectionDistribution:
    if window < 1:
        raise ValueError("window must be >= 1")
    return _distribution(heading_class(world, i, window) for i in world.ids)


def entropy_per_symbol(d: DirectionDistribution) -> float:
    h = -sum(p * math.log2(p) for p in d.p if p > 0)
    return max(0.0, h)


def compute_velocities(
    world: World,
    t: float,
    symbol_rate: float = 1.0,
    bits_per_meter: float = 1.0,
    v_max: float = 20.0,
    window: int = 1,
) -> list[float]:
    """Per-device speed V_i = min(v_max, t * symbol_rate * H_i / bits_per_meter), in id order.

    H_i is the direction entropy of device i and its in-range neighbours; each
    device rescans its neighbourhood, so the whole pass is O(n^2).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    ids = world.ids
    if not ids:
        raise EmptyWorld("no devices")
    classes = {i: heading_class(world, i, window) for i in ids}
    adj = world.adjacency()
    out = []
    counter = 0
    while counter < len(ids):
        i = ids[counter]
        h = entropy_per_symbol(_distribution(classes[j] for j in (i, *adj[i])))
        bits_per_sec = symbol_rate * h
        out.append(min(v_max, t * bits_per_sec / bits_per_meter))
        counter += 1
    return out


def with_speed(cfg: ScenarioConfig, speed: float) -> ScenarioConfig:
    """Scenario where devices move at ``speed``; the cap is lifted to match."""
    return cfg.replace(**{"mobility.speed": speed, "mobility.v_max": max(speed, 1e-9)})


def _cell(args) -> ThroughputSample:
    from .engine import Simulation

    cfg, count, speed, t = args
    sim = Simulation(cfg)
    sim.run()
    return ThroughputSample(count, speed, t, sim.throughput_mbps())


def table_cells(cfg: ScenarioConfig, device_counts, speeds, t_grid):
    for si, speed in enumerate(speeds):
        for ci, count in enumerate(device_counts):
            for ti, t in enumerate(t_grid):
                cell = with_speed(cfg, speed).replace(
                    device_count=count,
                    **{"traffic.load": t, "seed": table_seed(cfg.seed, si, ci, ti)},
                )
                yield cell, count, speed, t


def table_seed(master: int, speed_idx: int, count_idx: int, t_idx: int) -> int:
    # t_idx is deliberately left out: every cell in a table row shares one
    # placement/mobility realisation so rows differ only by offered load.
    ss = np.random.SeedSequence(master, spawn_key=(speed_idx, count_idx))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def measure_throughput(
    cfg: ScenarioConfig,
    device_counts: Sequence[int],
    speeds: Sequence[float],
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    jobs: int | None = 1,
) -> list[ThroughputSample]:
    if not device_counts or not speeds or not t_grid:
        raise ValueError("device_counts, speeds and t_grid must be non-empty")
    if any(c <= 0 for c in device_counts):
        raise EmptyScenario("a throughput scenario needs at least one device")
    cells = list(table_cells(cfg, device_counts, speeds, t_grid))
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1:
        return [_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell, cells))
