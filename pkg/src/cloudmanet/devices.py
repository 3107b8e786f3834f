"""Device records, radio links and the sleep/ready/active duty cycle."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .geometry import Position, distance
from .mobility import Velocity


class PowerState(enum.Enum):
    SLEEPING = "sleeping"
    READY = "ready"
    ACTIVE = "active"


LEGAL_TRANSITIONS = frozenset(
    {
        (PowerState.SLEEPING, PowerState.READY),
        (PowerState.READY, PowerState.ACTIVE),
        (PowerState.READY, PowerState.SLEEPING),
        (PowerState.ACTIVE, PowerState.SLEEPING),
    }
)
# Keeping the current state across a tick is always allowed.


@dataclass(frozen=True)
class DutySchedule:
    sleep_period: float = 10.0
    probe_window: float = 1.0
    idle_timeout: float = 5.0

    def __post_init__(self):
        for name in ("sleep_period", "probe_window", "idle_timeout"):
            if not getattr(self, name) > 0:
                raise ValueError(f"duty_cycle.{name} must be > 0")


@dataclass(eq=False)
class Device:
    id: int
    pos: Position
    radio_range: float
    vel: Velocity = Velocity(0.0, 0.0)
    state: PowerState = PowerState.ACTIVE
    has_uplink: bool = False
    hw_key: str = ""
    last_traffic: float = 0.0
    _frozen_range: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radio_range > 0:
            raise ValueError("radio range must be > 0")
        self._frozen_range = self.radio_range

    # Bumped on every position or power-state write; topology caches key on it.
    epoch = 0

    def __setattr__(self, name, value):
        if name == "radio_range" and "_frozen_range" in self.__dict__:
            raise AttributeError("a device's radio range is fixed")
        if name in ("pos", "state"):
            Device.epoch += 1
        super().__setattr__(name, value)

    @property
    def active(self) -> bool:
        return self.state is PowerState.ACTIVE


def in_probe_window(now: float, sched: DutySchedule) -> bool:
    return now % sched.sleep_period < sched.probe_window


def tick_power_state(
    d: Device, sched: DutySchedule, now: float, neighbor_present: bool
) -> PowerState:
    """Next power state of ``d``; at most one edge is taken per call."""
    if d.state is PowerState.SLEEPING:
        return PowerState.READY if in_probe_window(now, sched) else PowerState.SLEEPING
    if d.state is PowerState.READY:
        if neighbor_present:
            return PowerState.ACTIVE
        return PowerState.READY if in_probe_window(now, sched) else PowerState.SLEEPING
    if now - d.last_traffic > sched.idle_timeout:
        return PowerState.SLEEPING
    return PowerState.ACTIVE


def in_range(a: Device, b: Device) -> bool:
    return distance(a.pos, b.pos) <= min(a.radio_range, b.radio_range)
