"""Neighbour discovery and forwarding: position-based greedy (PBM), HMM/Viterbi and
the time-decaying gradient model (GM), plus the path metrics they are compared on."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import CellGrid, CellIndex, Position, TransitionMatrix, distance, neighbors
from .world import UnknownDevice, World


class ImpossibleSequence(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class Strategy(str, enum.Enum):
    PBM = "pbm"
    HMM = "hmm"
    GM = "gm"


@dataclass(frozen=True)
class ObservationSequence:
    obs: tuple[CellIndex, ...]
    emission_noise: float = 0.0

    def __post_init__(self):
        if not self.obs:
            raise ValueError("observation sequence is empty")
        if not 0.0 <= self.emission_noise < 1.0:
            raise ValueError("emission noise must lie in [0, 1)")


@dataclass(frozen=True)
class DiscoveryResult:
    strategy: Strategy
    path: tuple[int, ...]
    hops: int
    shortest_hops: int | None
    success: bool


@dataclass(frozen=True)
class DiscoveryMetrics:
    strategy: Strategy
    trials: int
    avg_path_length: float | None
    avg_stretch: float | None
    success_rate: float


def emission_matrix(g: CellGrid, eps: float) -> np.ndarray:
    """E[s, o]: probability of reporting cell o while in cell s.

    1 - eps on the true cell, eps shared evenly by its neighbours. A cell
    without neighbours always reports itself.
    """
    n = g.n_cells
    e = np.zeros((n, n))
    for s in range(n):
        nbrs = neighbors(g.cell(s), g)
        if not nbrs:
            e[s, s] = 1.0
            continue
        e[s, s] = 1.0 - eps
        for c in nbrs:
            e[s, g.index(c)] = eps / len(nbrs)
    return e


def viterbi(
    tm: TransitionMatrix, seq: ObservationSequence, initial: Sequence[float] | None = None
) -> tuple[list[CellIndex], float]:
    """Most likely cell sequence and its joint log-probability."""
    g = tm.grid
    n = tm.n
    if initial is None:
        initial = np.full(n, 1.0 / n)
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (n,) or abs(initial.sum() - 1.0) > 1e-9:
        raise ValueError("initial distribution must have one entry per cell and sum to 1")
    obs = [g.index(c) for c in seq.obs]
    with np.errstate(divide="ignore"):
        log_a = np.log(tm.p)
        log_e = np.log(emission_matrix(g, seq.emission_noise))
        delta = np.log(initial) + log_e[:, obs[0]]
    back = np.zeros((len(obs), n), dtype=int)
    for t in range(1, len(obs)):
        scores = delta[:, None] + log_a
        # argmax returns the first maximum, i.e. the lowest predecessor index
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(n)] + log_e[:, obs[t]]
    last = int(np.argmax(delta))
    best = float(delta[last])
    if best == -math.inf:
        raise ImpossibleSequence("no state sequence can produce these observations")
    states = [last]
    for t in range(len(obs) - 1, 0, -1):
        states.append(int(back[t, states[-1]]))
    states.reverse()
    return [g.cell(s) for s in states], best


def viterbi_decode(
    tm: TransitionMatrix, seq: ObservationSequence, initial: Sequence[float] | None = None
) -> list[CellIndex]:
    return viterbi(tm, seq, initial)[0]


def gradient_value(t: float, total: float, k: float = 1.0) -> float:
    if not total > 0 or not k > 0 or t < 0:
        raise ValueError("need total > 0, k > 0 and t >= 0")
    if t == 0:
        return 1.0
    if t > total:
        return 0.0
    return min(1.0, t ** (-k))


def decoded_cell(world: World, dst: int) -> CellIndex:
    """Viterbi estimate of the cell ``dst`` occupies now, cached for the current tick."""
    hit = world.decoded.get(dst)
    if hit is not None and hit[0] == world.tick:
        return hit[1]
    reports = tuple(world.observations.get(dst, ()))
    if not reports:
        cell = world.cell(dst)
    else:
        seq = ObservationSequence(reports, world.params.emission_noise)
        try:
            cell = viterbi_decode(world.transition, seq)[-1]
        except ImpossibleSequence:
            cell = reports[-1]
    world.decoded[dst] = (world.tick, cell)
    return cell


def _greedy_next(world: World, cur: int, target: Position) -> int | None:
    here = distance(world.devices[cur].pos, target)
    best, best_d = None, here
    for j in world.active_neighbors(cur):
        dj = distance(world.devices[j].pos, target)
        if dj < best_d:
            best, best_d = j, dj
    return best


def gradient(world: World, node: int, dst: int) -> float:
    age = world.contact_age(node, dst)
    if age is None:
        return 0.0
    return gradient_value(age, world.params.gradient_total, world.params.gradient_exponent)


def _gradient_next(world: World, cur: int, dst: int) -> int | None:
    here = gradient(world, cur, dst)
    best, best_g = None, here
    for j in world.active_neighbors(cur):
        gj = gradient(world, j, dst)
        if gj > best_g:
            best, best_g = j, gj
    return best


def discover(strategy: Strategy | str, world: World, src: int, dst: int, budget: int = 40) -> DiscoveryResult:
    strategy = Strategy(strategy)
    for i in (src, dst):
        if i not in world.devices:
            raise UnknownDevice(i)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if src == dst:
        return DiscoveryResult(strategy, (src,), 0, 0, True)
    shortest = world.hop_counts(src).get(dst)

    def fail():
        return DiscoveryResult(strategy, (), 0, shortest, False)

    if not (world.devices[src].active and world.devices[dst].active):
        return fail()

    dst_pos = world.devices[dst].pos
    cell_target = None
    if strategy is Strategy.HMM:
        cell_target = decoded_cell(world, dst)
        target_pos = world.grid.center(cell_target)

    path = [src]
    cur = src
    while cur != dst:
        if len(path) > budget:
            return fail()
        if dst in world.active_neighbors(cur):
            nxt = dst
        elif strategy is Strategy.PBM:
            nxt = _greedy_next(world, cur, dst_pos)
        elif strategy is Strategy.GM:
            nxt = _gradient_next(world, cur, dst)
        elif cell_target is not None and world.cell(cur) != cell_target:
            nxt = _greedy_next(world, cur, target_pos)
        else:
            # inside the decoded cell: home in on dst itself
            cell_target = None
            nxt = _greedy_next(world, cur, dst_pos)
        if nxt is None:
            return fail()
        path.append(nxt)
        cur = nxt
    if len(path) - 1 > budget:
        return fail()
    return DiscoveryResult(strategy, tuple(path), len(path) - 1, shortest, True)


def compute_metrics(results: Sequence[DiscoveryResult]) -> DiscoveryMetrics:
    if not results:
        raise EmptyInput("no discovery results to aggregate")
    strategies = {r.strategy for r in results}
    if len(strategies) != 1:
        raise ValueError(f"results mix strategies {sorted(s.value for s in strategies)}")
    ok = [r for r in results if r.success]
    if not ok:
        return DiscoveryMetrics(results[0].strategy, len(results), None, None, 0.0)
    stretches = [r.hops / r.shortest_hops if r.shortest_hops else 1.0 for r in ok]
    return DiscoveryMetrics(
        results[0].strategy,
        len(results),
        sum(r.hops for r in ok) / len(ok),
        sum(stretches) / len(stretches),
        len(ok) / len(results),
    )
