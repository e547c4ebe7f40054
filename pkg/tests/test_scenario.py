import csv

import pytest

from satqos.config import ScenarioConfig, SweepConfig, preset
from satqos.qos import Band
from satqos.scenario import emit_plot_data, run_scenario, run_sweep, sweep_points

SHORT = {"duration_s": 10.0}


def short(base=None, **extra):
    return (base or ScenarioConfig()).with_overrides({**SHORT, **extra})


@pytest.fixture(scope="module")
def short_run():
    return run_scenario(short(), debug=True)


def test_short_run_delivers_and_conserves(short_run):
    assert short_run.conservation.ok
    assert {c.band for c in short_run.classes} == set(Band)
    for c in short_run.classes:
        assert c.pdr > 0.99


def test_delay_floor_holds_for_every_flow(short_run):
    for f in short_run.flows:
        assert f.delay_sum >= f.rx_packets * f.floor_delay


def test_same_config_same_result(short_run):
    assert run_scenario(short()) == short_run


def test_all_sources_disabled_sends_nothing():
    off = {f"sensors.{k}.enabled": False for k in ("ecg", "hr", "spo2", "bp", "temp", "fall")}
    cfg = short(**off, **{"reminder.enabled": False, "email.enabled": False})
    r = run_scenario(cfg)
    assert r.flows == ()
    assert all(c.tx_packets == 0 for c in r.classes)


def test_stress_run_conserves_under_drops():
    r = run_scenario(short(preset("stress"), **{"sensors.ecg.rate_kbps": 256.0}), debug=True)
    assert r.conservation.ok
    assert sum(c.drops["codel"] + c.drops["fq_overflow"] for c in r.classes) > 0


def test_default_sweep_points():
    pts = sweep_points(ScenarioConfig())
    assert [p.ecg_rate_kbps for p in pts] == [16, 32, 64, 128, 256]
    assert {p.seed for p in pts} == {42}


def test_repetitions_increment_seeds():
    pts = sweep_points(ScenarioConfig(), SweepConfig(runs_per_point=3))
    assert len(pts) == 15
    assert [p.seed for p in pts[:3]] == [42, 43, 44]
    assert [p.ecg_rate_kbps for p in pts[:4]] == [16, 16, 16, 32]


def test_fixed_seed_policy():
    pts = sweep_points(ScenarioConfig(), SweepConfig(runs_per_point=2, seed_policy="fixed"))
    assert {p.seed for p in pts} == {42}


def test_single_rate_sweep_is_a_run():
    cfg = short()
    (only,) = run_sweep(cfg, SweepConfig(ecg_rates_kbps=(16.0,)))
    assert only == run_scenario(cfg)


def test_sweep_order_does_not_change_points():
    cfg = short()
    forward = run_sweep(cfg, SweepConfig(ecg_rates_kbps=(16.0, 64.0)))
    # run the later point first in a fresh process state
    alone = run_scenario(cfg.with_ecg_rate(64.0))
    assert forward[1] == alone
    assert [r.ecg_rate_kbps for r in forward] == [16.0, 64.0]


def test_plot_data_files(tmp_path):
    results = run_sweep(short(), SweepConfig(ecg_rates_kbps=(16.0, 32.0, 64.0, 128.0, 256.0)))
    paths = emit_plot_data(results, tmp_path)
    assert sorted(p.name for p in paths) == ["delay_vs_rate.csv", "pdr_vs_rate.csv", "throughput_vs_rate.csv"]
    for p in paths:
        rows = list(csv.DictReader(p.open()))
        assert len(rows) == 5
        rates = [float(r["rate_kbps"]) for r in rows]
        assert rates == sorted(rates)
        assert list(rows[0])[:4] == ["rate_kbps", "EF", "AF", "BE"]
    for row in csv.DictReader((tmp_path / "pdr_vs_rate.csv").open()):
        assert all(0 <= float(row[b]) <= 1 for b in ("EF", "AF", "BE"))
    delay_cols = next(csv.reader((tmp_path / "delay_vs_rate.csv").open()))
    assert "EF_queue" in delay_cols
