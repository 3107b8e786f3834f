"""In-process cloud store: device registration, gateway discovery, lifetime-estimated
sessions and cloud-relayed messaging."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .discovery import Strategy, discover
from .world import UnknownDevice, World


class NoGateway(RuntimeError):
    pass


class NoRoute(RuntimeError):
    pass


class SessionExpired(RuntimeError):
    pass


class SessionState(enum.Enum):
    ACTIVE = "active"
    EXPIRED = "expired"
    CLOSED = "closed"


@dataclass
class Session:
    id: int
    src: int
    dst: int
    gateway: int
    mu: float
    sigma: float
    life: float
    start: float
    state: SessionState = SessionState.ACTIVE

    def expires_at(self) -> float:
        return self.start + self.life

    def refresh(self, now: float) -> SessionState:
        if self.state is SessionState.ACTIVE and now > self.expires_at():
            self.state = SessionState.EXPIRED
        return self.state


@dataclass(frozen=True)
class LogEntry:
    session: int
    digest: str
    tick: int
    time: float
    src: int
    dst: int
    bytes: int


@dataclass(frozen=True)
class DeliveryReceipt:
    session: int
    hops_to_gateway: int
    hops: int
    tick: int
    path: tuple[int, ...]


@dataclass
class CloudStore:
    devices: dict[str, tuple[int, dict]] = field(default_factory=dict)
    sessions: dict[int, Session] = field(default_factory=dict)
    messages: list[LogEntry] = field(default_factory=list)
    neighbor_reports: dict[int, tuple[int, ...]] = field(default_factory=dict)
    journal: Path | None = None
    _next_device: int = 1
    _next_session: int = 1

    def register_device(self, hw_key: str, record: dict | None = None) -> int:
        """Id for ``hw_key``; a known key gets its existing id back."""
        if hw_key in self.devices:
            return self.devices[hw_key][0]
        did = self._next_device
        self._next_device += 1
        self.devices[hw_key] = (did, dict(record or {}))
        return did

    def is_registered(self, device_id: int) -> bool:
        return any(did == device_id for did, _ in self.devices.values())

    def report_neighbors(self, device_id: int, nbrs: Iterable[int]) -> None:
        self.neighbor_reports[device_id] = tuple(nbrs)

    def add_session(self, **kw) -> Session:
        s = Session(id=self._next_session, **kw)
        self._next_session += 1
        self.sessions[s.id] = s
        return s

    def append(self, entry: LogEntry) -> None:
        self.messages.append(entry)
        if self.journal is not None:
            line = {"tick": entry.tick, "session": entry.session, "src": entry.src, "dst": entry.dst, "bytes": entry.bytes}
            with open(self.journal, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(line, sort_keys=True) + "\n")


def register_device(store: CloudStore, hw_key: str, record: dict | None = None) -> int:
    return store.register_device(hw_key, record)


def discover_gateway(world: World, requester: int) -> int:
    """Closest (in hops) Active uplinked device reachable over Active links."""
    if not world.device(requester).active:
        raise ValueError(f"device {requester} is not active")
    hops = world.hop_counts(requester)
    candidates = [(h, i) for i, h in hops.items() if world.devices[i].has_uplink and world.devices[i].active]
    if not candidates:
        raise NoGateway(f"no uplinked device reachable from {requester}")
    return min(candidates)[1]


def connection_life(mu: float, sigma: float) -> float:
    """Mean of a lognormal(mu, sigma^2) link duration: exp(mu + sigma^2/2)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return math.exp(mu + sigma * sigma / 2.0)


def estimate_link_params(
    durations: Iterable[float], window: int = 20, prior: tuple[float, float] = (3.0, 0.5)
) -> tuple[float, float]:
    """(mu, sigma) of log link-up durations over the most recent ``window`` samples."""
    recent = [d for d in durations if d > 0][-window:]
    if not recent:
        return prior
    logs = np.log(recent)
    sigma = float(np.std(logs, ddof=1)) if len(logs) > 1 else 0.0
    return float(np.mean(logs)), sigma


def open_session(
    store: CloudStore,
    world: World,
    src: int,
    dst: int,
    window: int = 20,
    prior: tuple[float, float] = (3.0, 0.5),
) -> Session:
    for i in (src, dst):
        if not store.is_registered(i):
            raise UnknownDevice(i)
    gw = discover_gateway(world, src)
    mu, sigma = estimate_link_params(world.link_durations.get(src, ()), window, prior)
    return store.add_session(
        src=src,
        dst=dst,
        gateway=gw,
        mu=mu,
        sigma=sigma,
        life=connection_life(mu, sigma),
        start=world.now,
    )


def relay_message(
    store: CloudStore, world: World, session: Session, payload: bytes, budget: int = 40
) -> DeliveryReceipt:
    """Route src -> gateway by greedy forwarding, hand to the cloud, log it.

    Hop count: radio hops to the gateway, one cloud hop, plus the downlink hops
    when dst sits in another MANET that has its own gateway.
    """
    if session.refresh(world.now) is not SessionState.ACTIVE:
        raise SessionExpired(f"session {session.id} is {session.state.value}")
    up = discover(Strategy.PBM, world, session.src, session.gateway, budget)
    if not up.success:
        raise NoRoute(f"no greedy route from {session.src} to gateway {session.gateway}")
    hops = up.hops + 1
    path = up.path
    dst = world.devices.get(session.dst)
    if dst is not None and dst.active and session.dst not in world.hop_counts(session.src):
        try:
            gw_dst = discover_gateway(world, session.dst)
        except NoGateway:
            gw_dst = None
        if gw_dst is not None:
            down = discover(Strategy.PBM, world, gw_dst, session.dst, budget)
            if down.success:
                hops += down.hops
    store.append(
        LogEntry(
            session=session.id,
            digest=hashlib.sha256(payload).hexdigest(),
            tick=world.tick,
            time=world.now,
            src=session.src,
            dst=session.dst,
            bytes=len(payload),
        )
    )
    return DeliveryReceipt(session.id, up.hops, hops, world.tick, path)
