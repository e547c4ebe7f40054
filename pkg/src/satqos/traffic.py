"""Application flows: patient sensors, fall alerts, voice reminders and email."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .engine import SECOND, Engine, RngStream, derive_stream, to_ticks
from .qos import Band, Dscp, FlowKey, parse_dscp


class FlowKind(str, enum.Enum):
    ECG = "ecg"
    HEART_RATE = "hr"
    SPO2 = "spo2"
    BLOOD_PRESSURE = "bp"
    TEMPERATURE = "temp"
    FALL_ALERT = "fall"
    VOICE = "voice"
    EMAIL = "email"


SENSOR_KINDS = (
    FlowKind.ECG,
    FlowKind.HEART_RATE,
    FlowKind.SPO2,
    FlowKind.BLOOD_PRESSURE,
    FlowKind.TEMPERATURE,
    FlowKind.FALL_ALERT,
)

SENSOR_SPORT_BASE = 10_000
SENSOR_DPORT_BASE = 20_000
VOICE_PORT = 30_000
EMAIL_SPORT, EMAIL_DPORT = 25_000, 25


@dataclass(frozen=True)
class SensorSpec:
    kind: FlowKind
    rate_bps: int
    packet_size: int
    dscp: Dscp
    destination: int


@dataclass(frozen=True)
class BurstSpec:
    packet_size: int
    packet_count: int
    spread: int = 0

    def __post_init__(self) -> None:
        if self.packet_count < 1:
            raise ValueError("burst needs at least one packet")

    def offsets(self) -> list[int]:
        """Send offsets: first at 0, last at ``spread``, evenly spaced."""
        n = self.packet_count
        if n == 1:
            return [0]
        return [i * self.spread // (n - 1) for i in range(n)]


@dataclass(frozen=True)
class ReminderSchedule:
    period: int = 60 * SECOND
    burst: BurstSpec = BurstSpec(400, 40, 2 * SECOND)
    dscp: Dscp = Dscp.CS5

    def __post_init__(self) -> None:
        if self.burst.spread >= self.period:
            raise ValueError("reminder burst must end before the next period")


@dataclass(frozen=True)
class EmailSchedule:
    period: int = 30 * SECOND
    burst: BurstSpec = BurstSpec(400, 25, 0)
    dscp: Dscp = Dscp.CS1

    def __post_init__(self) -> None:
        if self.burst.spread >= self.period:
            raise ValueError("email burst must end before the next period")


Emit = Callable[["Source"], None]


class Source:
    """A flow endpoint that emits fixed-size packets through ``emit``."""

    def __init__(self, kind: FlowKind, key: FlowKey, dscp: Dscp, packet_size: int) -> None:
        self.kind = kind
        self.key = key
        self.dscp = dscp
        self.packet_size = packet_size
        self.emitted = 0

    @property
    def src(self) -> int:
        return self.key.src

    @property
    def dst(self) -> int:
        return self.key.dst

    @property
    def band(self) -> Band:
        return self.dscp.band

    def start(self, engine: Engine, emit: Emit, horizon: int) -> None:
        raise NotImplementedError

    def _fire(self, emit: Emit) -> None:
        self.emitted += 1
        emit(self)


class CbrSource(Source):
    """Constant bit rate, optionally gated by an on/off cycle.

    The k-th packet is due after k·size·8/rate seconds of on-time, computed
    from k directly so rounding never accumulates.
    """

    def __init__(
        self,
        kind: FlowKind,
        key: FlowKey,
        dscp: Dscp,
        packet_size: int,
        rate_bps: int,
        offset: int = 0,
        on: int = SECOND,
        off: int = 0,
    ) -> None:
        super().__init__(kind, key, dscp, packet_size)
        if rate_bps <= 0:
            raise ValueError("rate must be positive")
        if on <= 0 or off < 0:
            raise ValueError("on period must be positive and off period non-negative")
        self.rate_bps = rate_bps
        self.offset = offset
        self.on = on
        self.off = off
        self.interval = Fraction(packet_size * 8 * SECOND, rate_bps)
        self._engine: Engine | None = None

    def _wall(self, on_time: int) -> int:
        if self.off == 0:
            return self.offset + on_time
        cycles, rem = divmod(on_time, self.on)
        return self.offset + cycles * (self.on + self.off) + rem

    def _on_time(self, wall: int) -> int:
        t = wall - self.offset
        if t <= 0:
            return 0
        if self.off == 0:
            return t
        cycles, rem = divmod(t, self.on + self.off)
        return cycles * self.on + min(rem, self.on)

    def send_time(self, k: int) -> int:
        return self._wall(math.floor(k * self.interval))

    def next_send_time(self, now: int) -> int:
        return self._wall(self._on_time(now) + round(self.interval))

    def start(self, engine: Engine, emit: Emit, horizon: int) -> None:
        self._engine = engine
        engine.schedule(self.send_time(0), self._tick, emit, horizon)

    def _tick(self, emit: Emit, horizon: int) -> None:
        self._fire(emit)
        at = self.send_time(self.emitted)
        if at <= horizon:
            self._engine.schedule(at, self._tick, emit, horizon)


def next_send_time(source: CbrSource, now: int) -> int:
    return source.next_send_time(now)


def spawn_fall_events(rng: RngStream, duration: int, mean_interval: float) -> list[int]:
    """Poisson event times in ``[0, duration)``; ``mean_interval`` in ticks (inf disables)."""
    if not mean_interval > 0:
        raise ValueError("mean interval must be positive")
    if math.isinf(mean_interval):
        return []
    times = []
    t = 0.0
    while True:
        t += rng.exponential(mean_interval)
        if t >= duration:
            return times
        times.append(round(t))


class BurstSource(Source):
    """Emits a :class:`BurstSpec` at each of a precomputed list of times."""

    def __init__(self, kind: FlowKind, key: FlowKey, dscp: Dscp, burst: BurstSpec, times=()) -> None:
        super().__init__(kind, key, dscp, burst.packet_size)
        self.burst = burst
        self.times = list(times)

    def event_times(self, horizon: int) -> list[int]:
        return [t for t in self.times if t < horizon]

    def start(self, engine: Engine, emit: Emit, horizon: int) -> None:
        offsets = self.burst.offsets()
        for t in self.event_times(horizon):
            for off in offsets:
                if t + off <= horizon:
                    engine.schedule(t + off, self._fire, emit)


class FallAlertSource(BurstSource):
    def __init__(self, key, dscp, burst, rng: RngStream, mean_interval: float) -> None:
        super().__init__(FlowKind.FALL_ALERT, key, dscp, burst)
        self.rng = rng
        self.mean_interval = mean_interval

    def event_times(self, horizon: int) -> list[int]:
        if not self.times:
            self.times = spawn_fall_events(self.rng, horizon, self.mean_interval)
        return self.times


class PeriodicBurstSource(BurstSource):
    def __init__(self, kind, key, dscp, burst, period: int, phase: int = 0) -> None:
        super().__init__(kind, key, dscp, burst)
        self.period = period
        self.phase = phase

    def event_times(self, horizon: int) -> list[int]:
        return list(range(self.phase, horizon, self.period))


def _kbps(rate_kbps) -> int:
    return round(Fraction(str(rate_kbps)) * 1000)


def sensor_specs(config, destination: int) -> list[SensorSpec]:
    """The enabled sensor streams of one patient, in fixed kind order."""
    specs = []
    for kind in SENSOR_KINDS:
        sc = getattr(config.sensors, kind.value)
        if not sc.enabled:
            continue
        if kind is FlowKind.FALL_ALERT:
            rate = 0 if math.isinf(sc.mean_interval_s) else round(
                sc.count * sc.size_bytes * 8 / sc.mean_interval_s
            )
        else:
            rate = _kbps(sc.rate_kbps)
        specs.append(SensorSpec(kind, rate, sc.size_bytes, parse_dscp(sc.dscp), destination))
    return specs


def make_patient_sources(patient: int, index: int, config, medcenter: int) -> list[Source]:
    """Five CBR sensors plus the fall-alert process for one patient.

    Each CBR stream starts at a random phase within its first interval,
    drawn from its own labelled stream.
    """
    on = to_ticks(config.sensors.on_s)
    off = to_ticks(config.sensors.off_s)
    sources: list[Source] = []
    for spec in sensor_specs(config, medcenter):
        kidx = SENSOR_KINDS.index(spec.kind)
        key = FlowKey(patient, medcenter, SENSOR_SPORT_BASE + kidx, SENSOR_DPORT_BASE + kidx)
        if spec.kind is FlowKind.FALL_ALERT:
            fc = config.sensors.fall
            burst = BurstSpec(fc.size_bytes, fc.count, to_ticks(fc.spread_s))
            mean = math.inf if math.isinf(fc.mean_interval_s) else fc.mean_interval_s * SECOND
            rng = derive_stream(config.seed, f"fall.p{index}")
            sources.append(FallAlertSource(key, spec.dscp, burst, rng, mean))
            continue
        src = CbrSource(spec.kind, key, spec.dscp, spec.packet_size, spec.rate_bps, on=on, off=off)
        phase_rng = derive_stream(config.seed, f"start.p{index}.{spec.kind.value}")
        src.offset = math.floor(phase_rng.random() * src.interval)
        sources.append(src)
    return sources


def make_reminder_flows(hub: int, patients: list[int], sched: ReminderSchedule) -> list[Source]:
    n = len(patients)
    return [
        PeriodicBurstSource(
            FlowKind.VOICE,
            FlowKey(hub, p, VOICE_PORT, VOICE_PORT),
            sched.dscp,
            sched.burst,
            sched.period,
            phase=i * sched.period // n,
        )
        for i, p in enumerate(patients)
    ]


def make_email_flow(hub: int, medcenter: int, sched: EmailSchedule) -> Source:
    return PeriodicBurstSource(
        FlowKind.EMAIL,
        FlowKey(hub, medcenter, EMAIL_SPORT, EMAIL_DPORT),
        sched.dscp,
        sched.burst,
        sched.period,
    )


def reminder_schedule(config) -> ReminderSchedule:
    rc = config.reminder
    return ReminderSchedule(
        to_ticks(rc.period_s),
        BurstSpec(rc.size_bytes, rc.count, to_ticks(rc.spread_s)),
        parse_dscp(rc.dscp),
    )


def email_schedule(config) -> EmailSchedule:
    ec = config.email
    return EmailSchedule(
        to_ticks(ec.period_s),
        BurstSpec(ec.size_bytes, ec.count, to_ticks(ec.spread_s)),
        parse_dscp(ec.dscp),
    )


def make_all_sources(net, config) -> list[Source]:
    sources: list[Source] = []
    for i, p in enumerate(net.patients):
        sources += make_patient_sources(p, i, config, net.medical_center)
    if config.reminder.enabled:
        sources += make_reminder_flows(net.hub, net.patients, reminder_schedule(config))
    if config.email.enabled:
        sources.append(make_email_flow(net.hub, net.medical_center, email_schedule(config)))
    return sources
