"""Deterministic time-stepped engine tying mobility, duty cycling, discovery,
sessions and metric collection together."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cloud
from .cloud import CloudStore, NoGateway, NoRoute, SessionExpired, SessionState
from .config import SCHEMA_VERSION, ScenarioConfig, to_dict
from .devices import Device, PowerState, tick_power_state
from .discovery import DiscoveryResult, Strategy, compute_metrics, discover
from .geometry import CellGrid, Position, neighbors
from .mobility import GaussMarkovParams, Velocity, WaypointState, above_diagonal, diagonal_waypoint_step, gauss_markov_step
from .world import DiscoveryParams, World

log = logging.getLogger(__name__)

# One rng stream per phase; new phases get new keys so old streams never shift.
PLACEMENT, MOBILITY, OBSERVE, TRAFFIC, TRIALS = range(5)


def phase_rng(seed: int, phase: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(phase, *extra)))


@dataclass
class SimReport:
    schema_version: int
    seed: int
    config: dict
    initial: dict
    samples: list[dict] = field(default_factory=list)
    discovery: dict[str, dict] = field(default_factory=dict)
    throughput: dict = field(default_factory=dict)
    power_transitions: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


class Simulation:
    def __init__(self, cfg: ScenarioConfig, journal: str | Path | None = None):
        self.cfg = cfg
        g = cfg.grid
        self.grid = CellGrid(Position(*g.origin), g.cell_size, g.cols, g.rows)
        d = cfg.discovery
        self.world = World(
            self.grid,
            params=DiscoveryParams(
                emission_noise=d.emission_noise,
                history=d.history,
                self_weight=g.self_weight,
                gradient_total=d.gradient_total,
                gradient_exponent=d.gradient_exponent,
            ),
        )
        self.store = CloudStore(journal=Path(journal) if journal else None)
        self.rng_mobility = phase_rng(cfg.seed, MOBILITY)
        self.rng_observe = phase_rng(cfg.seed, OBSERVE)
        self.rng_traffic = phase_rng(cfg.seed, TRAFFIC)
        self.rng_trials = phase_rng(cfg.seed, TRIALS)
        self.samples: list[dict] = []
        self.trials: dict[Strategy, list[DiscoveryResult]] = {}
        self.transitions: Counter = Counter()
        self.open_sessions: dict[tuple[int, int], int] = {}
        self.delivered_bits = 0
        self.delivered = 0
        self.dropped = 0
        self.heading: dict[int, float] = {}
        self.waypoints: dict[int, Position] = {}
        self.prev_pos: dict[int, Position] = {}
        self._place(phase_rng(cfg.seed, PLACEMENT))
        self.cells = {i: self.world.cell(i) for i in self.world.ids}
        self.initial = self.snapshot()

    # -- setup -------------------------------------------------------------

    def _random_point(self, rng) -> Position:
        g = self.grid
        p = Position(
            g.origin.x + rng.uniform(0.0, g.width),
            g.origin.y + rng.uniform(0.0, g.height),
        )
        return g.clamp(p)

    def _place(self, rng) -> None:
        cfg = self.cfg
        for k in range(cfg.device_count):
            hw = f"dev-{k:04d}"
            did = self.store.register_device(hw, {"uplink": k < cfg.gateways})
            pos = self._random_point(rng)
            heading = float(rng.uniform(0.0, 2 * math.pi))
            speed = min(cfg.mobility.speed, cfg.mobility.v_max)
            dev = Device(
                id=did,
                pos=pos,
                radio_range=cfg.radio_range,
                vel=Velocity(speed * math.cos(heading), speed * math.sin(heading)),
                state=PowerState.ACTIVE,
                has_uplink=k < cfg.gateways,
                hw_key=hw,
            )
            self.world.add(dev)
            self.heading[did] = heading
            self.prev_pos[did] = pos
            self.waypoints[did] = self._random_point(rng)

    # -- phases ------------------------------------------------------------

    def _move_gauss_markov(self, dev: Device) -> Position:
        m = self.cfg.mobility
        params = GaussMarkovParams(m.alpha, m.speed, self.heading[dev.id], m.noise_std, m.v_max)
        dev.vel = gauss_markov_step(dev.vel, params, self.cfg.dt, self.rng_mobility)
        raw = Position(dev.pos.x + dev.vel.vx * self.cfg.dt, dev.pos.y + dev.vel.vy * self.cfg.dt, dev.pos.z)
        new = self.grid.clamp(raw)
        if new != raw:
            # standard Gauss-Markov edge rule: steer the mean heading back inwards
            cx = self.grid.origin.x + self.grid.width / 2
            cy = self.grid.origin.y + self.grid.height / 2
            self.heading[dev.id] = math.atan2(cy - new.y, cx - new.x)
        return new

    def _move_waypoint(self, dev: Device) -> Position:
        m = self.cfg.mobility
        target = self.waypoints[dev.id]
        gap = math.hypot(target.x - dev.pos.x, target.y - dev.pos.y)
        reach = m.speed * self.cfg.dt
        if gap <= reach:
            step_to = target
            self.waypoints[dev.id] = self._random_point(self.rng_mobility)
        else:
            k = reach / gap
            step_to = Position(dev.pos.x + (target.x - dev.pos.x) * k, dev.pos.y + (target.y - dev.pos.y) * k, dev.pos.z)
        delta = self.grid.cell_size / 4 if m.delta is None else m.delta
        w = WaypointState(dev.pos, step_to, (delta, delta))
        above = above_diagonal(self.prev_pos[dev.id], dev.pos, step_to)
        new = diagonal_waypoint_step(w, above, self.rng_mobility, self.grid)
        dt = self.cfg.dt
        dev.vel = Velocity((new.x - dev.pos.x) / dt, (new.y - dev.pos.y) / dt)
        return new

    def _phase_mobility(self) -> None:
        gauss = self.cfg.mobility.model == "gauss-markov"
        for i in self.world.ids:
            dev = self.world.devices[i]
            new = self._move_gauss_markov(dev) if gauss else self._move_waypoint(dev)
            self.prev_pos[i] = dev.pos
            self.world.set_position(i, new)

    def _phase_cells(self) -> None:
        w = self.world
        eps = w.params.emission_noise
        for i in w.ids:
            cell = w.cell(i)
            if cell != self.cells[i]:
                # entering a new cell invalidates what was decoded for the old one
                w.decoded.pop(i, None)
                self.cells[i] = cell
            report = cell
            nbrs = sorted(neighbors(cell, self.grid))
            if nbrs and self.rng_observe.random() < eps:
                report = nbrs[int(self.rng_observe.integers(len(nbrs)))]
            w.observations[i].append(report)
        w.update_links()
        for i, nbrs in w.adjacency().items():
            self.store.report_neighbors(i, nbrs)

    def _phase_duty(self) -> None:
        w = self.world
        awake = {i for i, d in w.devices.items() if d.state is not PowerState.SLEEPING}
        adj = w.adjacency()
        for i in w.ids:
            dev = w.devices[i]
            present = any(j in awake for j in adj[i])
            new = tick_power_state(dev, self.cfg.duty_cycle, w.now, present)
            if new is not dev.state:
                self.transitions[(dev.state, new)] += 1
                if new is PowerState.ACTIVE:
                    dev.last_traffic = w.now
                dev.state = new

    def _session_for(self, src: int, dst: int):
        sid = self.open_sessions.get((src, dst))
        if sid is not None:
            s = self.store.sessions[sid]
            if s.refresh(self.world.now) is SessionState.ACTIVE:
                return s
            del self.open_sessions[(src, dst)]
        s = cloud.open_session(
            self.store,
            self.world,
            src,
            dst,
            window=self.cfg.session.window,
            prior=(self.cfg.session.mu_prior, self.cfg.session.sigma_prior),
        )
        self.open_sessions[(src, dst)] = s.id
        return s

    def _phase_traffic(self) -> tuple[int, int]:
        w = self.world
        t = self.cfg.traffic
        lam = t.message_rate * t.load * self.cfg.dt
        if lam <= 0 or len(w.devices) < 2:
            return 0, 0
        ids = w.ids
        senders = [i for i in ids if w.devices[i].active]
        bits = sent = 0
        for src in senders:
            for n in range(int(self.rng_traffic.poisson(lam))):
                k = int(self.rng_traffic.integers(len(ids) - 1))
                dst = ids[k] if ids[k] < src else ids[k + 1]
                payload = f"{w.tick}:{src}:{dst}:{n}".encode().ljust(t.payload_bytes, b"\0")[: t.payload_bytes]
                try:
                    session = self._session_for(src, dst)
                    receipt = cloud.relay_message(self.store, w, session, payload, self.cfg.discovery.budget)
                except (NoGateway, NoRoute, SessionExpired) as exc:
                    log.debug("tick %d: %s -> %s dropped: %s", w.tick, src, dst, exc)
                    self.dropped += 1
                    continue
                for hop in receipt.path:
                    w.devices[hop].last_traffic = w.now
                bits += 8 * len(payload)
                sent += 1
        self.delivered_bits += bits
        self.delivered += sent
        return bits, sent

    def discovery_trial(self) -> bool:
        """Run every configured strategy on one random connected Active pair."""
        w = self.world
        active = [i for i in w.ids if w.devices[i].active]
        if len(active) < 2:
            return False
        for _ in range(20):
            src = active[int(self.rng_trials.integers(len(active)))]
            reach = sorted(j for j in w.hop_counts(src) if j != src)
            if reach:
                break
        else:
            return False
        dst = reach[int(self.rng_trials.integers(len(reach)))]
        chosen = self.cfg.discovery.strategy
        strategies = list(Strategy) if chosen == "all" else [Strategy(chosen)]
        for s in strategies:
            r = discover(s, w, src, dst, self.cfg.discovery.budget)
            self.trials.setdefault(s, []).append(r)
        return True

    # -- driving -----------------------------------------------------------

    def snapshot(self, bits: int = 0, sent: int = 0) -> dict:
        w = self.world
        packed = np.array([[w.devices[i].pos.x, w.devices[i].pos.y, w.devices[i].pos.z] for i in w.ids], dtype="<f8")
        return {
            "tick": w.tick,
            "time": w.now,
            "positions_digest": hashlib.sha256(packed.tobytes()).hexdigest()[:16],
            "active_devices": sum(d.active for d in w.devices.values()),
            "active_links": w.active_links(),
            "delivered_bits": bits,
            "delivered_messages": sent,
        }

    def step(self) -> dict:
        w = self.world
        w.tick += 1
        w.now = w.tick * self.cfg.dt
        self._phase_mobility()
        self._phase_cells()
        self._phase_duty()
        bits, sent = self._phase_traffic()
        for _ in range(self.cfg.discovery.trials_per_tick):
            self.discovery_trial()
        sample = self.snapshot(bits, sent)
        self.samples.append(sample)
        return sample

    def run(self, ticks: int | None = None) -> SimReport:
        for _ in range(self.cfg.duration if ticks is None else ticks):
            self.step()
        return self.report()

    def throughput_mbps(self) -> float:
        elapsed = len(self.samples) * self.cfg.dt
        if elapsed == 0:
            return 0.0
        return self.delivered_bits / elapsed / self.cfg.traffic.load / 1e6

    def report(self) -> SimReport:
        return SimReport(
            schema_version=SCHEMA_VERSION,
            seed=self.cfg.seed,
            config=to_dict(self.cfg),
            initial=self.initial,
            samples=list(self.samples),
            discovery={s.value: _metrics_dict(compute_metrics(rs)) for s, rs in sorted(self.trials.items()) if rs},
            throughput={
                "delivered_bits": self.delivered_bits,
                "delivered_messages": self.delivered,
                "dropped_messages": self.dropped,
                "sessions_opened": len(self.store.sessions),
                "mbps_per_load": self.throughput_mbps(),
            },
            power_transitions={f"{a.value}->{b.value}": n for (a, b), n in sorted(self.transitions.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))},
        )


def _metrics_dict(m) -> dict:
    return {
        "trials": m.trials,
        "avg_path_length": m.avg_path_length,
        "avg_stretch": m.avg_stretch,
        "success_rate": m.success_rate,
    }


def run_scenario(cfg: ScenarioConfig, journal: str | Path | None = None) -> SimReport:
    return Simulation(cfg, journal).run()


def benchmark_discovery(cfg: ScenarioConfig, trials: int) -> dict[Strategy, list[DiscoveryResult]]:
    """Warm up, then one discovery trial per tick until ``trials`` have run."""
    sim = Simulation(cfg)
    for _ in range(cfg.discovery.warmup):
        sim.step()
    done = 0
    idle = 0
    while done < trials:
        sim.step()
        if sim.discovery_trial():
            done += 1
            idle = 0
        else:
            idle += 1
            if idle > 1000:
                raise RuntimeError("no connected Active device pair for 1000 ticks")
    return sim.trials
