"""Mutable simulation state shared by discovery, the cloud relay and the engine."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .devices import Device
from .geometry import CellGrid, CellIndex, Position, TransitionMatrix, build_transition_matrix, cell_of


@dataclass(frozen=True)
class DiscoveryParams:
    emission_noise: float = 0.1
    history: int = 6
    self_weight: float = 0.2
    gradient_total: float = 60.0
    gradient_exponent: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.emission_noise < 1.0:
            raise ValueError("emission_noise must lie in [0, 1)")
        if self.history < 1:
            raise ValueError("history must be >= 1")
        if not self.gradient_total > 0 or not self.gradient_exponent > 0:
            raise ValueError("gradient_total and gradient_exponent must be > 0")


class UnknownDevice(KeyError):
    pass


@dataclass(eq=False)
class World:
    grid: CellGrid
    devices: dict[int, Device] = field(default_factory=dict)
    params: DiscoveryParams = field(default_factory=DiscoveryParams)
    now: float = 0.0
    tick: int = 0
    # noisy cell reports per device, newest last
    observations: dict[int, deque] = field(default_factory=dict)
    # (lo_id, hi_id) -> time the pair was last within range
    last_contact: dict[tuple[int, int], float] = field(default_factory=dict)
    # (lo_id, hi_id) -> time the current link came up
    link_start: dict[tuple[int, int], float] = field(default_factory=dict)
    link_durations: dict[int, deque] = field(default_factory=dict)
    # recent positions per device, newest last
    trail: dict[int, deque] = field(default_factory=dict)
    trail_len: int = 16
    # dst id -> (tick, decoded cell)
    decoded: dict[int, tuple[int, CellIndex]] = field(default_factory=dict)
    _transition: TransitionMatrix | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)
    _cache_key: tuple | None = field(default=None, repr=False)

    def add(self, d: Device) -> Device:
        if d.id in self.devices:
            raise ValueError(f"duplicate device id {d.id}")
        if not self.grid.contains(d.pos):
            raise ValueError(f"device {d.id} placed outside the region")
        self.devices[d.id] = d
        self.observations[d.id] = deque(maxlen=self.params.history)
        self.link_durations[d.id] = deque(maxlen=64)
        self.trail[d.id] = deque([d.pos], maxlen=self.trail_len)
        return d

    def device(self, i: int) -> Device:
        try:
            return self.devices[i]
        except KeyError:
            raise UnknownDevice(i) from None

    @property
    def ids(self) -> list[int]:
        return sorted(self.devices)

    @property
    def transition(self) -> TransitionMatrix:
        if self._transition is None:
            self._transition = build_transition_matrix(self.grid, self.params.self_weight)
        return self._transition

    def set_position(self, i: int, pos: Position) -> None:
        self.device(i).pos = pos
        self.trail[i].append(pos)

    def cell(self, i: int) -> CellIndex:
        return cell_of(self.device(i).pos, self.grid)

    def _cached(self) -> dict:
        key = (Device.epoch, len(self.devices))
        if key != self._cache_key:
            self._cache = {}
            self._cache_key = key
        return self._cache

    def adjacency(self) -> dict[int, tuple[int, ...]]:
        """Physical links (ignores power state), neighbour ids sorted ascending."""
        cache = self._cached()
        if "adj" not in cache:
            ids = self.ids
            if not ids:
                cache["adj"] = {}
                return cache["adj"]
            xyz = np.array([[self.devices[i].pos.x, self.devices[i].pos.y, self.devices[i].pos.z] for i in ids])
            rng = np.array([self.devices[i].radio_range for i in ids])
            d = xyz[None, :, :] - xyz[:, None, :]
            dist = np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])
            linked = dist <= np.minimum.outer(rng, rng)
            np.fill_diagonal(linked, False)
            cache["adj"] = {
                i: tuple(ids[j] for j in np.flatnonzero(linked[k])) for k, i in enumerate(ids)
            }
        return cache["adj"]

    def linked(self, a: int, b: int) -> bool:
        return b in self.adjacency()[a]

    def active_neighbors(self, i: int) -> list[int]:
        cache = self._cached().setdefault("active_nbrs", {})
        if i not in cache:
            cache[i] = [j for j in self.adjacency()[i] if self.devices[j].active]
        return cache[i]

    def hop_counts(self, src: int) -> dict[int, int]:
        """BFS hop counts from ``src`` over in-range Active devices. Do not mutate the result."""
        self.device(src)
        cache = self._cached().setdefault("hops", {})
        if src not in cache:
            cache[src] = self._bfs(src)
        return cache[src]

    def _bfs(self, src: int) -> dict[int, int]:
        hops = {src: 0}
        if not self.devices[src].active:
            return hops
        frontier = deque([src])
        while frontier:
            u = frontier.popleft()
            for v in self.active_neighbors(u):
                if v not in hops:
                    hops[v] = hops[u] + 1
                    frontier.append(v)
        return hops

    def active_links(self) -> int:
        adj = self.adjacency()
        return sum(
            1
            for i, nbrs in adj.items()
            if self.devices[i].active
            for j in nbrs
            if j > i and self.devices[j].active
        )

    def update_links(self) -> list[tuple[tuple[int, int], float]]:
        """Refresh contact times and link lifetimes at ``now``.

        Returns the links that went down since the last call with their durations.
        """
        adj = self.adjacency()
        up = {(i, j) for i, nbrs in adj.items() for j in nbrs if i < j}
        for pair in up:
            self.last_contact[pair] = self.now
            self.link_start.setdefault(pair, self.now)
        ended = []
        for pair in sorted(set(self.link_start) - up):
            dur = self.now - self.link_start.pop(pair)
            ended.append((pair, dur))
            if dur > 0:
                for i in pair:
                    if i in self.link_durations:
                        self.link_durations[i].append(dur)
        return ended

    def contact_age(self, a: int, b: int) -> float | None:
        if a == b:
            return 0.0
        t = self.last_contact.get((min(a, b), max(a, b)))
        return None if t is None else self.now - t
