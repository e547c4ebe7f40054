"""Scenario configuration: defaults, ``key = value`` documents, presets, validation.

The document format is one ``dotted.key = value`` per line; ``#`` starts a
comment. Keys mirror the dataclass nesting below, e.g.::

    duration_s = 100
    sensors.ecg.rate_kbps = 256
    links.uplink.rate_mbps = 4
    sweep.ecg_rates_kbps = 16, 32, 64, 128, 256
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .qos import Dscp


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key, ``line`` its line."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class MobilityConfig:
    bound_x_m: float = 100.0
    bound_y_m: float = 100.0
    speed_min_mps: float = 0.5
    speed_max_mps: float = 1.5
    redraw_s: float = 1.0


@dataclass(frozen=True)
class SensorConfig:
    rate_kbps: float
    size_bytes: int
    dscp: str
    enabled: bool = True


@dataclass(frozen=True)
class FallConfig:
    mean_interval_s: float = 30.0
    count: int = 40
    size_bytes: int = 80
    spread_s: float = 2.0
    dscp: str = "CS6"
    enabled: bool = True


@dataclass(frozen=True)
class SensorsConfig:
    ecg: SensorConfig = SensorConfig(16.0, 400, "CS6")
    hr: SensorConfig = SensorConfig(12.0, 240, "CS4")
    spo2: SensorConfig = SensorConfig(8.0, 200, "CS3")
    bp: SensorConfig = SensorConfig(6.0, 160, "CS2")
    temp: SensorConfig = SensorConfig(2.0, 80, "CS2")
    fall: FallConfig = FallConfig()
    on_s: float = 1.0
    off_s: float = 0.0


@dataclass(frozen=True)
class BurstScheduleConfig:
    period_s: float
    count: int
    size_bytes: int
    spread_s: float
    dscp: str
    enabled: bool = True


@dataclass(frozen=True)
class LinkConfig:
    rate_mbps: float
    delay_ms: float
    jitter_low_ms: float = 0.0
    jitter_high_ms: float = 0.0
    queue_limit: int = 100


@dataclass(frozen=True)
class LinksConfig:
    wifi: LinkConfig = LinkConfig(100.0, 1.0)
    ap_hub: LinkConfig = LinkConfig(100.0, 1.0)
    hub_ap: LinkConfig = LinkConfig(100.0, 1.0)
    uplink: LinkConfig = LinkConfig(50.0, 30.0, 25.0, 35.0)
    sat_hub: LinkConfig = LinkConfig(1000.0, 30.0, 25.0, 35.0)
    sat_ground: LinkConfig = LinkConfig(1000.0, 10.0)
    ground_sat: LinkConfig = LinkConfig(1000.0, 10.0)
    ground_mc: LinkConfig = LinkConfig(1000.0, 1.0)
    mc_ground: LinkConfig = LinkConfig(1000.0, 1.0)


@dataclass(frozen=True)
class QosConfig:
    codel_target_ms: float = 5.0
    codel_interval_ms: float = 100.0
    fq_quantum_bytes: int = 1514
    fq_queues: int = 1024
    fq_limit: int = 1000
    fq_perturbation: int = 0
    band_policy: str = "strict"


@dataclass(frozen=True)
class SweepConfig:
    ecg_rates_kbps: tuple[float, ...] = (16.0, 32.0, 64.0, 128.0, 256.0)
    runs_per_point: int = 1
    seed_policy: str = "increment"


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float = 100.0
    seed: int = 42
    patients: int = 15
    aps: int = 3
    warmup_s: float = 0.0
    mobility: MobilityConfig = MobilityConfig()
    sensors: SensorsConfig = SensorsConfig()
    reminder: BurstScheduleConfig = BurstScheduleConfig(60.0, 40, 400, 2.0, "CS5")
    email: BurstScheduleConfig = BurstScheduleConfig(30.0, 25, 400, 0.0, "CS1")
    links: LinksConfig = LinksConfig()
    qos: QosConfig = QosConfig()
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def ecg_rate_bps(self) -> int:
        return round(self.sensors.ecg.rate_kbps * 1000)

    def with_overrides(self, overrides: dict[str, object]) -> "ScenarioConfig":
        flat = flatten(self)
        for key, value in overrides.items():
            if key not in flat:
                raise ConfigError("unknown key", field=key)
            flat[key] = value
        return validate(unflatten(flat))

    def with_ecg_rate(self, kbps: float) -> "ScenarioConfig":
        return self.with_overrides({"sensors.ecg.rate_kbps": float(kbps)})

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed)


PRESETS: dict[str, dict[str, object]] = {
    "default": {},
    # at 50 Mbps the bottleneck never congests; 4 Mbps makes class separation visible
    "stress": {"links.uplink.rate_mbps": 4.0},
}


def preset(name: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    try:
        overrides = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}", field="preset") from None
    return (base or ScenarioConfig()).with_overrides(overrides)


# ------------------------------------------------------------------ flatten / unflatten


def _hints(cls) -> dict[str, typing.Any]:
    return typing.get_type_hints(cls)


def flatten(obj, prefix: str = "") -> dict[str, object]:
    out: dict[str, object] = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(flatten(value, key + "."))
        else:
            out[key] = value
    return out


def _coerce(value, tp, key: str, line: int | None = None):
    try:
        if tp is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "yes", "on", "1"):
                return True
            if text in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"expected a boolean, got {value!r}")
        if tp is int:
            if isinstance(value, bool):
                raise ValueError("expected an integer")
            if isinstance(value, float):
                if not value.is_integer():
                    raise ValueError(f"expected an integer, got {value!r}")
                return int(value)
            return int(str(value).strip())
        if tp is float:
            return float(str(value).strip()) if isinstance(value, str) else float(value)
        if tp is str:
            return str(value).strip()
        if typing.get_origin(tp) is tuple:
            items = value.split(",") if isinstance(value, str) else list(value)
            return tuple(float(str(v).strip()) for v in items if str(v).strip())
    except ValueError as exc:
        raise ConfigError(str(exc), field=key, line=line) from None
    raise ConfigError(f"unsupported field type {tp!r}", field=key, line=line)


def unflatten(flat: dict[str, object], cls=None, prefix: str = "", lines=None):
    cls = cls or ScenarioConfig
    lines = lines or {}
    hints = _hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}{f.name}"
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = unflatten(flat, tp, key + ".", lines)
        else:
            kwargs[f.name] = _coerce(flat[key], tp, key, lines.get(key))
    return cls(**kwargs)


def known_keys() -> list[str]:
    return list(flatten(ScenarioConfig()))


# ------------------------------------------------------------------ text format


def parse_config(text: str) -> ScenarioConfig:
    """Parse a ``key = value`` document on top of the defaults and validate it."""
    flat = flatten(ScenarioConfig())
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError("missing key before '='", line=lineno)
        if key not in flat:
            raise ConfigError("unknown key", field=key, line=lineno)
        if key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", field=key, line=lineno)
        if not value:
            raise ConfigError("missing value", field=key, line=lineno)
        flat[key] = value
        lines[key] = lineno
    return validate(unflatten(flat, lines=lines))


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: ScenarioConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in flatten(config).items())


# ------------------------------------------------------------------ validation


def _positive(key: str, value) -> None:
    if not value > 0:
        raise ConfigError(f"must be > 0, got {value!r}", field=key)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    flat = flatten(cfg)
    if cfg.patients < 1:
        raise ConfigError(f"must be >= 1, got {cfg.patients}", field="patients")
    if cfg.aps < 1:
        raise ConfigError(f"must be >= 1, got {cfg.aps}", field="aps")
    _positive("duration_s", cfg.duration_s)
    if math.isinf(cfg.duration_s):
        raise ConfigError("must be finite", field="duration_s")
    if not 0 <= cfg.warmup_s < cfg.duration_s:
        raise ConfigError("must lie in [0, duration_s)", field="warmup_s")
    if cfg.seed < 0:
        raise ConfigError("must be non-negative", field="seed")

    m = cfg.mobility
    _positive("mobility.bound_x_m", m.bound_x_m)
    _positive("mobility.bound_y_m", m.bound_y_m)
    _positive("mobility.redraw_s", m.redraw_s)
    if not 0 <= m.speed_min_mps <= m.speed_max_mps:
        raise ConfigError("need 0 <= speed_min_mps <= speed_max_mps", field="mobility.speed_min_mps")

    for name in ("ecg", "hr", "spo2", "bp", "temp"):
        _positive(f"sensors.{name}.rate_kbps", getattr(cfg.sensors, name).rate_kbps)
    for name in ("ecg", "hr", "spo2", "bp", "temp", "fall"):
        size = getattr(cfg.sensors, name).size_bytes
        if not 80 <= size <= 400:
            raise ConfigError(f"sensor packets are 80..400 bytes, got {size}", field=f"sensors.{name}.size_bytes")
    _positive("sensors.on_s", cfg.sensors.on_s)
    if cfg.sensors.off_s < 0:
        raise ConfigError("must be >= 0", field="sensors.off_s")
    fall = cfg.sensors.fall
    _positive("sensors.fall.mean_interval_s", fall.mean_interval_s)
    _positive("sensors.fall.count", fall.count)
    if fall.spread_s < 0:
        raise ConfigError("must be >= 0", field="sensors.fall.spread_s")

    for name in ("reminder", "email"):
        sc = getattr(cfg, name)
        _positive(f"{name}.period_s", sc.period_s)
        _positive(f"{name}.count", sc.count)
        _positive(f"{name}.size_bytes", sc.size_bytes)
        if not 0 <= sc.spread_s < sc.period_s:
            raise ConfigError("burst spread must lie in [0, period_s)", field=f"{name}.spread_s")

    for key, value in flat.items():
        if key.endswith(".dscp"):
            if str(value).upper() not in Dscp.__members__:
                raise ConfigError(f"unknown code point {value!r}", field=key)

    for f in dataclasses.fields(cfg.links):
        lc: LinkConfig = getattr(cfg.links, f.name)
        base = f"links.{f.name}"
        _positive(f"{base}.rate_mbps", lc.rate_mbps)
        if lc.delay_ms < 0:
            raise ConfigError("must be >= 0", field=f"{base}.delay_ms")
        if lc.jitter_low_ms < 0:
            raise ConfigError("must be >= 0", field=f"{base}.jitter_low_ms")
        if lc.jitter_low_ms > lc.jitter_high_ms:
            raise ConfigError("jitter_low_ms exceeds jitter_high_ms", field=f"{base}.jitter_low_ms")
        _positive(f"{base}.queue_limit", lc.queue_limit)

    q = cfg.qos
    _positive("qos.codel_target_ms", q.codel_target_ms)
    if not q.codel_target_ms < q.codel_interval_ms:
        raise ConfigError("target must be below interval", field="qos.codel_target_ms")
    _positive("qos.fq_quantum_bytes", q.fq_quantum_bytes)
    _positive("qos.fq_queues", q.fq_queues)
    _positive("qos.fq_limit", q.fq_limit)
    if q.fq_perturbation < 0:
        raise ConfigError("must be >= 0", field="qos.fq_perturbation")
    if q.band_policy != "strict":
        raise ConfigError(f"only 'strict' is supported, got {q.band_policy!r}", field="qos.band_policy")

    s = cfg.sweep
    rates = s.ecg_rates_kbps
    if not rates:
        raise ConfigError("must list at least one rate", field="sweep.ecg_rates_kbps")
    if any(r <= 0 for r in rates) or any(b <= a for a, b in zip(rates, rates[1:])):
        raise ConfigError("rates must be positive and strictly increasing", field="sweep.ecg_rates_kbps")
    _positive("sweep.runs_per_point", s.runs_per_point)
    if s.seed_policy not in ("fixed", "increment"):
        raise ConfigError("must be 'fixed' or 'increment'", field="sweep.seed_policy")
    return cfg
