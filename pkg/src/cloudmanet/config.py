"""Scenario configuration: nested dataclasses loaded from TOML."""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .devices import DutySchedule

SCHEMA_VERSION = 1
MOBILITY_MODELS = ("gauss-markov", "diagonal-waypoint")
STRATEGIES = ("all", "pbm", "hmm", "gm")


class ConfigInvalid(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GridConfig:
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 50.0
    cols: int = 20
    rows: int = 20
    self_weight: float = 0.2


@dataclass(frozen=True)
class MobilityConfig:
    model: str = "gauss-markov"
    speed: float = 10.0
    alpha: float = 0.75
    noise_std: float = 2.0
    v_max: float = 20.0
    # diagonal-waypoint offsets; None means cell_size / 4
    delta: typing.Optional[float] = None


@dataclass(frozen=True)
class DiscoveryConfig:
    strategy: str = "all"
    emission_noise: float = 0.1
    history: int = 6
    gradient_total: float = 60.0
    gradient_exponent: float = 1.0
    budget: int = 40
    trials_per_tick: int = 0
    warmup: int = 0


@dataclass(frozen=True)
class TrafficConfig:
    message_rate: float = 0.0
    payload_bytes: int = 1024
    load: float = 1.0


@dataclass(frozen=True)
class SessionConfig:
    mu_prior: float = 3.0
    sigma_prior: float = 0.5
    window: int = 20


@dataclass(frozen=True)
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    duration: int = 100
    dt: float = 1.0
    device_count: int = 10
    gateways: int = 1
    radio_range: float = 250.0
    grid: GridConfig = field(default_factory=GridConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    duty_cycle: DutySchedule = field(default_factory=DutySchedule)
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    session: SessionConfig = field(default_factory=SessionConfig)

    def __post_init__(self):
        _check(self)

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"mobility.speed": 20})``."""
        return from_dict(_merge(to_dict(self), changes))


def _check(cfg: ScenarioConfig) -> None:
    def need(ok, name, msg):
        if not ok:
            raise ConfigInvalid(name, msg)

    need(cfg.schema_version == SCHEMA_VERSION, "schema_version", f"unsupported version {cfg.schema_version}")
    need(0 <= cfg.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    need(cfg.duration >= 0, "duration", "must be >= 0")
    need(cfg.dt > 0, "dt", "must be > 0")
    need(cfg.device_count >= 0, "device_count", "must be >= 0")
    need(0 <= cfg.gateways, "gateways", "must be >= 0")
    need(cfg.radio_range > 0, "radio_range", "must be > 0")
    g = cfg.grid
    need(g.cell_size > 0, "grid.cell_size", "must be > 0")
    need(g.cols >= 1, "grid.cols", "must be >= 1")
    need(g.rows >= 1, "grid.rows", "must be >= 1")
    need(0 <= g.self_weight <= 1, "grid.self_weight", "must lie in [0, 1]")
    m = cfg.mobility
    need(m.model in MOBILITY_MODELS, "mobility.model", f"must be one of {', '.join(MOBILITY_MODELS)}")
    need(m.speed >= 0, "mobility.speed", "must be >= 0")
    need(0 <= m.alpha <= 1, "mobility.alpha", "must lie in [0, 1]")
    need(m.noise_std >= 0, "mobility.noise_std", "must be >= 0")
    need(m.v_max > 0, "mobility.v_max", "must be > 0")
    need(m.delta is None or m.delta >= 0, "mobility.delta", "must be >= 0")
    d = cfg.discovery
    need(d.strategy in STRATEGIES, "discovery.strategy", f"must be one of {', '.join(STRATEGIES)}")
    need(0 <= d.emission_noise < 1, "discovery.emission_noise", "must lie in [0, 1)")
    need(d.history >= 1, "discovery.history", "must be >= 1")
    need(d.gradient_total > 0, "discovery.gradient_total", "must be > 0")
    need(d.gradient_exponent > 0, "discovery.gradient_exponent", "must be > 0")
    need(d.budget >= 1, "discovery.budget", "must be >= 1")
    need(d.trials_per_tick >= 0, "discovery.trials_per_tick", "must be >= 0")
    need(d.warmup >= 0, "discovery.warmup", "must be >= 0")
    t = cfg.traffic
    need(t.message_rate >= 0, "traffic.message_rate", "must be >= 0")
    need(t.payload_bytes >= 0, "traffic.payload_bytes", "must be >= 0")
    need(t.load > 0, "traffic.load", "must be > 0")
    s = cfg.session
    need(s.sigma_prior >= 0, "session.sigma_prior", "must be >= 0")
    need(s.window >= 1, "session.window", "must be >= 1")


def _coerce(value, tp, name):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], name)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigInvalid(name, "expected a table")
        return _build(tp, value, name + ".")
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)) or len(value) != len(args):
            raise ConfigInvalid(name, f"expected a list of {len(args)} numbers")
        return tuple(_coerce(v, a, name) for v, a in zip(value, args))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(name, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(name, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(name, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(name, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {tp}")


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in known:
            raise ConfigInvalid(prefix + key, "unknown field")
    kwargs = {k: _coerce(v, hints[k], prefix + k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigInvalid:
        raise
    except ValueError as exc:
        raise ConfigInvalid(prefix.rstrip(".") or cls.__name__, str(exc)) from None


def from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data)


def to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _merge(base: dict, changes: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for key, value in changes.items():
        *parents, leaf = key.split(".")
        node = out
        for p in parents:
            if not isinstance(node.get(p), dict):
                raise ConfigInvalid(key, "unknown field")
            node = node[p]
        if leaf not in node:
            raise ConfigInvalid(key, "unknown field")
        node[leaf] = value
    return out


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except FileNotFoundError:
        raise ConfigInvalid("config", f"file not found: {path}") from None
    try:
        data = tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigInvalid("config", f"cannot parse {path}: {exc}") from None
    return from_dict(data)
