"""Packet-level simulator of a satellite-backhauled IoMT monitoring network."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config, preset
from .qos import Band, Dscp
from .scenario import emit_plot_data, run_scenario, run_sweep
from .telemetry import RunResult

__all__ = [
    "Band",
    "ConfigError",
    "Dscp",
    "RunResult",
    "ScenarioConfig",
    "emit_plot_data",
    "load_config",
    "parse_config",
    "preset",
    "run_scenario",
    "run_sweep",
]

__version__ = "0.1.0"
