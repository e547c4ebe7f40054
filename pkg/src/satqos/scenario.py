"""Single runs, rate sweeps and plot-data files."""

from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .config import ScenarioConfig, SweepConfig
from .engine import MS, Engine, to_ticks
from .net import Network, build_topology
from .qos import Band, Packet
from .telemetry import Monitor, RunResult, _write_csv, fmt, make_result
from .traffic import Source, make_all_sources

log = logging.getLogger(__name__)


class Simulation:
    """One fully wired run: engine, network, sources and monitor."""

    def __init__(self, config: ScenarioConfig, debug: bool = False) -> None:
        self.config = config
        self.engine = Engine()
        self.horizon = to_ticks(config.duration_s)
        self.monitor = Monitor(warmup=to_ticks(config.warmup_s), debug=debug)
        engine, monitor = self.engine, self.monitor
        self.net: Network = build_topology(
            config,
            engine,
            on_rx=lambda pkt: monitor.record_rx(pkt, engine.now),
            on_drop=lambda pkt, reason: monitor.record_drop(pkt, engine.now, reason),
        )
        self.sources: list[Source] = make_all_sources(self.net, config)
        self._stats = {}
        self._uid = 0
        for src in self.sources:
            net = self.net
            self._stats[id(src)] = monitor.register(
                src.key,
                src.kind.value,
                net.node(src.src).name,
                net.node(src.dst).name,
                src.dscp,
                base_delay=net.base_path_delay(src.src, src.dst, src.packet_size),
                floor_delay=net.floor_path_delay(src.src, src.dst, src.packet_size),
            )

    def emit(self, src: Source) -> None:
        now = self.engine.now
        pkt = Packet(self._uid, src.key, src.dscp, src.packet_size, now, src.dst, self._stats[id(src)])
        self._uid += 1
        self.monitor.record_tx(pkt, now)
        self.net.forward(pkt, src.src)

    def run(self) -> RunResult:
        started = time.perf_counter()
        self.net.start_mobility()
        for src in self.sources:
            src.start(self.engine, self.emit, self.horizon)
        summary = self.engine.run_until(self.horizon)
        # whatever is still queued or on a wire when the clock stops is in flight
        live = Counter(id(p.stats) for p in self.net.in_flight() if p.stats is not None)
        for st in self.monitor.flows:
            st.in_flight = live.get(id(st), 0)
        wall = time.perf_counter() - started
        result = make_result(self.config, self.monitor.flows, summary.events, wall)
        log.info(
            "ecg=%g kbps seed=%d: %d events in %.2fs",
            self.config.sensors.ecg.rate_kbps, self.config.seed, summary.events, wall,
        )
        return result


def run_scenario(config: ScenarioConfig, debug: bool = False) -> RunResult:
    return Simulation(config, debug=debug).run()


@dataclass(frozen=True)
class SweepPoint:
    ecg_rate_kbps: float
    repetition: int
    seed: int


def sweep_points(config: ScenarioConfig, sweep: Optional[SweepConfig] = None) -> list[SweepPoint]:
    sweep = sweep or config.sweep
    points = []
    for rate in sweep.ecg_rates_kbps:
        for rep in range(sweep.runs_per_point):
            seed = config.seed + rep if sweep.seed_policy == "increment" else config.seed
            points.append(SweepPoint(rate, rep, seed))
    return points


def _run_point(args: tuple[ScenarioConfig, SweepPoint]) -> RunResult:
    config, point = args
    return run_scenario(config.with_ecg_rate(point.ecg_rate_kbps).with_seed(point.seed))


def run_sweep(
    config: ScenarioConfig, sweep: Optional[SweepConfig] = None, jobs: int = 1
) -> list[RunResult]:
    """One run per (rate, repetition), ordered by rate then repetition."""
    tasks = [(config, p) for p in sweep_points(config, sweep)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(_run_point, tasks))
    return [_run_point(t) for t in tasks]


# ------------------------------------------------------------------ plot data


@dataclass(frozen=True)
class PointSummary:
    """Class metrics for one sweep rate, pooled over its repetitions."""

    rate_kbps: float
    pdr: dict
    delay_ms: dict
    queue_delay_ms: dict
    throughput_bps: dict
    per_flow_throughput_bps: dict


def summarize_points(results: Sequence[RunResult]) -> list[PointSummary]:
    by_rate: dict[float, list[RunResult]] = {}
    for r in results:
        by_rate.setdefault(r.ecg_rate_kbps, []).append(r)
    out = []
    for rate in sorted(by_rate):
        runs = by_rate[rate]
        pdr, delay, qdelay, tput, per_flow = {}, {}, {}, {}, {}
        for band in Band:
            rows = [(r, r.band(band)) for r in runs]
            rows = [(r, c) for r, c in rows if c is not None]
            if not rows:
                continue
            tx = sum(c.tx_packets for _, c in rows)
            rx = sum(c.rx_packets for _, c in rows)
            pdr[band] = rx / tx if tx else None
            if rx:
                delay[band] = sum(c.mean_delay * c.rx_packets for _, c in rows) / rx / MS
                qdelay[band] = sum(c.queue_delay * c.rx_packets for _, c in rows) / rx / MS
            else:
                delay[band] = qdelay[band] = None
            tput[band] = sum(c.throughput for _, c in rows) / len(rows)
            per_flow[band] = sum(c.per_flow_throughput for _, c in rows) / len(rows)
        out.append(PointSummary(rate, pdr, delay, qdelay, tput, per_flow))
    return out


def _rate_label(rate: float) -> str:
    return f"{rate:g}"


def emit_plot_data(results: Sequence[RunResult], outdir: str | Path) -> list[Path]:
    """Write throughput/delay/pdr-vs-rate CSVs, one row per sweep rate, ascending."""
    outdir = Path(outdir)
    points = summarize_points(results)
    bands = list(Band)
    names = [b.name for b in bands]

    def row(p: PointSummary, *columns: dict) -> list:
        cells = [_rate_label(p.rate_kbps)]
        for col in columns:
            cells += [fmt(col.get(b)) for b in bands]
        return cells

    return [
        _write_csv(
            outdir / "throughput_vs_rate.csv",
            ["rate_kbps", *names, *(f"{n}_per_flow" for n in names)],
            [row(p, p.throughput_bps, p.per_flow_throughput_bps) for p in points],
        ),
        _write_csv(
            outdir / "delay_vs_rate.csv",
            ["rate_kbps", *names, *(f"{n}_queue" for n in names)],
            [row(p, p.delay_ms, p.queue_delay_ms) for p in points],
        ),
        _write_csv(
            outdir / "pdr_vs_rate.csv",
            ["rate_kbps", *names],
            [row(p, p.pdr) for p in points],
        ),
    ]


__all__ = [
    "PointSummary",
    "Simulation",
    "SweepPoint",
    "emit_plot_data",
    "run_scenario",
    "run_sweep",
    "summarize_points",
    "sweep_points",
]
