"""Per-flow accounting, per-class aggregation and result files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .config import ScenarioConfig, flatten, unflatten, validate
from .engine import MS, SECOND, to_ticks
from .qos import Band, Dscp, FlowKey, Packet

DROP_REASONS = ("codel", "fq_overflow", "fifo_overflow")


def _zero_drops() -> dict[str, int]:
    return dict.fromkeys(DROP_REASONS, 0)


@dataclass
class FlowStats:
    flow_id: int
    key: FlowKey
    kind: str
    src: str
    dst: str
    dscp: Dscp
    base_delay: int = 0
    floor_delay: int = 0
    tx_packets: int = 0
    rx_packets: int = 0
    tx_bytes: int = 0
    rx_bytes: int = 0
    delay_sum: int = 0
    first_tx: Optional[int] = None
    last_rx: Optional[int] = None
    drops: dict[str, int] = field(default_factory=_zero_drops)
    in_flight: int = 0

    @property
    def band(self) -> Band:
        return self.dscp.band

    @property
    def dropped(self) -> int:
        return sum(self.drops.values())


class AccountingError(RuntimeError):
    """A packet was counted twice for the same event."""


class Monitor:
    """Collects tx/rx/drop events. Packets created before ``warmup`` are not counted.

    With ``debug`` set, every uid is tracked so a packet transmitted twice or
    finishing twice (rx or drop) raises :class:`AccountingError`.
    """

    def __init__(self, warmup: int = 0, debug: bool = False) -> None:
        self.warmup = warmup
        self.debug = debug
        self.flows: list[FlowStats] = []
        self._sent: set[int] = set()
        self._done: set[int] = set()

    def register(self, key: FlowKey, kind: str, src: str, dst: str, dscp: Dscp,
                 base_delay: int = 0, floor_delay: int = 0) -> FlowStats:
        stats = FlowStats(len(self.flows), key, kind, src, dst, dscp, base_delay, floor_delay)
        self.flows.append(stats)
        return stats

    def record_tx(self, pkt: Packet, now: int) -> None:
        st = pkt.stats
        if st is None:
            return
        if now < self.warmup:
            pkt.stats = None
            return
        if self.debug:
            if pkt.uid in self._sent:
                raise AccountingError(f"packet {pkt.uid} transmitted twice")
            self._sent.add(pkt.uid)
        st.tx_packets += 1
        st.tx_bytes += pkt.size
        if st.first_tx is None:
            st.first_tx = now

    def _finish(self, pkt: Packet) -> None:
        if pkt.uid in self._done:
            raise AccountingError(f"packet {pkt.uid} finished twice")
        self._done.add(pkt.uid)

    def record_rx(self, pkt: Packet, now: int) -> None:
        st = pkt.stats
        if st is None:
            return
        if self.debug:
            self._finish(pkt)
        st.rx_packets += 1
        st.rx_bytes += pkt.size
        st.delay_sum += now - pkt.created_at
        st.last_rx = now

    def record_drop(self, pkt: Packet, now: int, reason: str) -> None:
        st = pkt.stats
        if st is None:
            return
        if self.debug:
            self._finish(pkt)
        st.drops[reason] += 1


# ------------------------------------------------------------------ per-flow metrics


def pdr(stats: FlowStats) -> Optional[float]:
    if stats.tx_packets == 0:
        return None
    return stats.rx_packets / stats.tx_packets


def mean_delay(stats: FlowStats) -> Optional[float]:
    """Mean end-to-end delay in ticks, or None with nothing received."""
    if stats.rx_packets == 0:
        return None
    return stats.delay_sum / stats.rx_packets


def queue_delay(stats: FlowStats) -> Optional[float]:
    d = mean_delay(stats)
    return None if d is None else d - stats.base_delay


def throughput(stats: FlowStats, run_duration: int) -> float:
    """Received bits per second over ``run_duration`` ticks."""
    if run_duration <= 0:
        raise ValueError("run duration must be positive")
    return stats.rx_bytes * 8 * SECOND / run_duration


def active_throughput(stats: FlowStats) -> Optional[float]:
    if stats.first_tx is None or stats.last_rx is None or stats.last_rx <= stats.first_tx:
        return None
    return stats.rx_bytes * 8 * SECOND / (stats.last_rx - stats.first_tx)


@dataclass(frozen=True)
class ClassAggregate:
    band: Band
    flow_count: int
    tx_packets: int
    rx_packets: int
    tx_bytes: int
    rx_bytes: int
    pdr: Optional[float]
    mean_delay: Optional[float]
    queue_delay: Optional[float]
    throughput: float
    per_flow_throughput: float
    drops: dict = field(hash=False)


def aggregate_by_class(flows: Iterable[FlowStats], run_duration: int) -> list[ClassAggregate]:
    """Packet-weighted per-band rows; bands without flows are omitted."""
    groups: dict[Band, list[FlowStats]] = {}
    for f in flows:
        groups.setdefault(f.band, []).append(f)
    rows = []
    for band in sorted(groups):
        fs = groups[band]
        tx = sum(f.tx_packets for f in fs)
        rx = sum(f.rx_packets for f in fs)
        delay = sum(f.delay_sum for f in fs)
        base = sum(f.base_delay * f.rx_packets for f in fs)
        rx_bytes = sum(f.rx_bytes for f in fs)
        tput = rx_bytes * 8 * SECOND / run_duration
        rows.append(
            ClassAggregate(
                band=band,
                flow_count=len(fs),
                tx_packets=tx,
                rx_packets=rx,
                tx_bytes=sum(f.tx_bytes for f in fs),
                rx_bytes=rx_bytes,
                pdr=rx / tx if tx else None,
                mean_delay=delay / rx if rx else None,
                queue_delay=(delay - base) / rx if rx else None,
                throughput=tput,
                per_flow_throughput=tput / len(fs),
                drops={r: sum(f.drops[r] for f in fs) for r in DROP_REASONS},
            )
        )
    return rows


# ------------------------------------------------------------------ run result


@dataclass(frozen=True)
class ConservationReport:
    ok: bool
    tx: int
    rx: int
    dropped: int
    in_flight: int
    violations: tuple = ()


def conservation(flows: Iterable[FlowStats]) -> ConservationReport:
    flows = list(flows)
    bad = tuple(
        (f.flow_id, f.tx_packets, f.rx_packets, f.dropped, f.in_flight)
        for f in flows
        if f.tx_packets != f.rx_packets + f.dropped + f.in_flight
    )
    return ConservationReport(
        ok=not bad,
        tx=sum(f.tx_packets for f in flows),
        rx=sum(f.rx_packets for f in flows),
        dropped=sum(f.dropped for f in flows),
        in_flight=sum(f.in_flight for f in flows),
        violations=bad,
    )


@dataclass(frozen=True)
class RunResult:
    config: ScenarioConfig
    flows: tuple[FlowStats, ...]
    classes: tuple[ClassAggregate, ...]
    conservation: ConservationReport
    events: int = 0
    wall_seconds: float = field(default=0.0, compare=False)

    @property
    def ecg_rate_kbps(self) -> float:
        return self.config.sensors.ecg.rate_kbps

    @property
    def measured_duration(self) -> int:
        return _measured_duration(self.config)

    def band(self, band: Band) -> Optional[ClassAggregate]:
        for row in self.classes:
            if row.band == band:
                return row
        return None


def _measured_duration(config: ScenarioConfig) -> int:
    return to_ticks(config.duration_s) - to_ticks(config.warmup_s)


def make_result(config: ScenarioConfig, flows: list[FlowStats], events: int = 0,
                wall_seconds: float = 0.0) -> RunResult:
    duration = _measured_duration(config)
    return RunResult(
        config=config,
        flows=tuple(flows),
        classes=tuple(aggregate_by_class(flows, duration)),
        conservation=conservation(flows),
        events=events,
        wall_seconds=wall_seconds,
    )


# ------------------------------------------------------------------ export


def fmt(value: Optional[float], digits: int = 6) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _ms(ticks: Optional[float]) -> Optional[float]:
    return None if ticks is None else ticks / MS


FLOWMON_COLUMNS = [
    "flow_id", "src", "dst", "kind", "dscp", "band", "tx_pkts", "rx_pkts",
    "tx_bytes", "rx_bytes", "pdr", "mean_delay_ms", "queue_delay_ms",
    "throughput_bps", "drops_codel", "drops_fq_overflow", "drops_fifo_overflow",
    "active_throughput_bps",
]

SUMMARY_COLUMNS = [
    "band", "flow_count", "tx_pkts", "rx_pkts", "tx_bytes", "rx_bytes", "pdr",
    "mean_delay_ms", "queue_delay_ms", "throughput_bps", "per_flow_throughput_bps",
    "drops_codel", "drops_fq_overflow", "drops_fifo_overflow",
]


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def flowmon_rows(result: RunResult) -> list[list]:
    duration = result.measured_duration
    return [
        [
            f.flow_id, f.src, f.dst, f.kind, f.dscp.name, f.band.name,
            f.tx_packets, f.rx_packets, f.tx_bytes, f.rx_bytes,
            fmt(pdr(f)), fmt(_ms(mean_delay(f))), fmt(_ms(queue_delay(f))),
            fmt(throughput(f, duration)),
            f.drops["codel"], f.drops["fq_overflow"], f.drops["fifo_overflow"],
            fmt(active_throughput(f)),
        ]
        for f in result.flows
    ]


def write_flowmon_csv(result: RunResult, path: str | Path) -> Path:
    return _write_csv(Path(path), FLOWMON_COLUMNS, flowmon_rows(result))


def write_class_summary_csv(result: RunResult, path: str | Path) -> Path:
    rows = [
        [
            c.band.name, c.flow_count, c.tx_packets, c.rx_packets, c.tx_bytes, c.rx_bytes,
            fmt(c.pdr), fmt(_ms(c.mean_delay)), fmt(_ms(c.queue_delay)),
            fmt(c.throughput), fmt(c.per_flow_throughput),
            c.drops["codel"], c.drops["fq_overflow"], c.drops["fifo_overflow"],
        ]
        for c in result.classes
    ]
    return _write_csv(Path(path), SUMMARY_COLUMNS, rows)


def _round(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(x, 6)


def to_dict(result: RunResult) -> dict:
    return {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in flatten(result.config).items()},
        "events": result.events,
        "flows": [
            {
                "flow_id": f.flow_id,
                "key": list(f.key),
                "kind": f.kind,
                "src": f.src,
                "dst": f.dst,
                "dscp": f.dscp.name,
                "band": f.band.name,
                "base_delay_ns": f.base_delay,
                "floor_delay_ns": f.floor_delay,
                "tx_packets": f.tx_packets,
                "rx_packets": f.rx_packets,
                "tx_bytes": f.tx_bytes,
                "rx_bytes": f.rx_bytes,
                "delay_sum_ns": f.delay_sum,
                "first_tx_ns": f.first_tx,
                "last_rx_ns": f.last_rx,
                "drops": dict(f.drops),
                "in_flight": f.in_flight,
            }
            for f in result.flows
        ],
        "classes": [
            {
                "band": c.band.name,
                "flow_count": c.flow_count,
                "tx_packets": c.tx_packets,
                "rx_packets": c.rx_packets,
                "pdr": _round(c.pdr),
                "mean_delay_ms": _round(_ms(c.mean_delay)),
                "queue_delay_ms": _round(_ms(c.queue_delay)),
                "throughput_bps": _round(c.throughput),
                "per_flow_throughput_bps": _round(c.per_flow_throughput),
                "drops": dict(c.drops),
            }
            for c in result.classes
        ],
        "conservation": {
            "ok": result.conservation.ok,
            "tx": result.conservation.tx,
            "rx": result.conservation.rx,
            "dropped": result.conservation.dropped,
            "in_flight": result.conservation.in_flight,
            "violations": [list(v) for v in result.conservation.violations],
        },
    }


def write_json(result: RunResult, path: str | Path) -> Path:
    path = Path(path)
    text = json.dumps(to_dict(result), indent=2, sort_keys=True) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def from_dict(doc: dict) -> RunResult:
    config = validate(unflatten(doc["config"]))
    flows = [
        FlowStats(
            flow_id=d["flow_id"],
            key=FlowKey(*d["key"]),
            kind=d["kind"],
            src=d["src"],
            dst=d["dst"],
            dscp=Dscp[d["dscp"]],
            base_delay=d["base_delay_ns"],
            floor_delay=d["floor_delay_ns"],
            tx_packets=d["tx_packets"],
            rx_packets=d["rx_packets"],
            tx_bytes=d["tx_bytes"],
            rx_bytes=d["rx_bytes"],
            delay_sum=d["delay_sum_ns"],
            first_tx=d["first_tx_ns"],
            last_rx=d["last_rx_ns"],
            drops=dict(d["drops"]),
            in_flight=d["in_flight"],
        )
        for d in doc["flows"]
    ]
    return make_result(config, flows, events=doc.get("events", 0))


def load_json(path: str | Path) -> RunResult:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
