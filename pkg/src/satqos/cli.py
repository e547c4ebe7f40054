"""Command-line entry point: ``satqos [--sweep] [--preset stress] ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PRESETS, ConfigError, ScenarioConfig, dump_config, load_config, preset
from .scenario import emit_plot_data, run_scenario, run_sweep
from .telemetry import RunResult, write_class_summary_csv, write_flowmon_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="satqos",
        description="Simulate the satellite-backhauled IoMT network and export per-flow/per-class QoS metrics.",
    )
    p.add_argument("--config", type=Path, help="key = value scenario file (defaults apply to missing keys)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="default",
                   help="named override set; 'stress' drops the uplink to 4 Mbps")
    p.add_argument("--ecg-rate", type=float, metavar="KBPS", help="ECG sensor rate override")
    p.add_argument("--sweep", action="store_true", help="run every rate in sweep.ecg_rates_kbps")
    p.add_argument("--seed", type=int, help="root seed override")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="per-class summary format; flowmon_results.csv is always written")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    p.add_argument("--quiet", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    base = load_config(args.config) if args.config else ScenarioConfig()
    cfg = preset(args.preset, base)
    if args.ecg_rate is not None:
        if args.sweep:
            raise ConfigError("--ecg-rate cannot be combined with --sweep", field="ecg-rate")
        cfg = cfg.with_ecg_rate(args.ecg_rate)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed})
    return cfg


def write_run(result: RunResult, outdir: Path, fmt: str) -> list[Path]:
    paths = [write_flowmon_csv(result, outdir / "flowmon_results.csv")]
    if fmt == "json":
        paths.append(write_json(result, outdir / "results.json"))
    else:
        paths.append(write_class_summary_csv(result, outdir / "class_summary.csv"))
    return paths


def _cell(v, scale=1.0, spec="8.3f") -> str:
    return " " * 8 if v is None else format(v * scale, spec)


def print_summary(result: RunResult, out=None) -> None:
    out = out or sys.stdout
    cfg = result.config
    print(
        f"ECG {cfg.sensors.ecg.rate_kbps:g} kbps  seed {cfg.seed}  uplink "
        f"{cfg.links.uplink.rate_mbps:g} Mbps  events {result.events}  "
        f"conservation {'ok' if result.conservation.ok else 'VIOLATED'}",
        file=out,
    )
    print("  band  flows      pdr  delay_ms  queue_ms   thr_kbps", file=out)
    for c in result.classes:
        print(
            f"  {c.band.name:<4}  {c.flow_count:5d} {_cell(c.pdr)}  {_cell(c.mean_delay, 1e-6)}"
            f"  {_cell(c.queue_delay, 1e-6)} {_cell(c.throughput, 1e-3, '10.2f')}",
            file=out,
        )


def _point_dir(result: RunResult, rep: int, reps: int) -> str:
    name = f"ecg_{result.ecg_rate_kbps:g}kbps"
    return f"{name}_rep{rep}" if reps > 1 else name


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK

    try:
        if args.sweep:
            results = run_sweep(cfg, jobs=max(1, args.jobs))
            reps = cfg.sweep.runs_per_point
            for i, r in enumerate(results):
                write_run(r, args.out / _point_dir(r, i % reps, reps), args.format)
                if not args.quiet:
                    print_summary(r)
            emit_plot_data(results, args.out)
        else:
            result = run_scenario(cfg)
            write_run(result, args.out, args.format)
            if not args.quiet:
                print_summary(result)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"results written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
