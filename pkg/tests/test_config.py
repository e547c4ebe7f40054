import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satqos.config import (
    ConfigError,
    ScenarioConfig,
    dump_config,
    known_keys,
    load_config,
    parse_config,
    preset,
)


def test_empty_document_gives_defaults():
    assert parse_config("") == ScenarioConfig()
    assert parse_config("# only a comment\n\n") == ScenarioConfig()


def test_defaults_match_parameter_table():
    cfg = ScenarioConfig()
    assert cfg.duration_s == 100
    assert cfg.patients == 15
    assert cfg.links.wifi.rate_mbps == 100 and cfg.links.wifi.delay_ms == 1
    assert cfg.links.uplink.rate_mbps == 50
    assert cfg.links.sat_ground.rate_mbps == 1000
    assert cfg.sweep.ecg_rates_kbps[0] == 16 and cfg.sweep.ecg_rates_kbps[-1] == 256
    s = cfg.sensors
    assert (s.hr.rate_kbps, s.spo2.rate_kbps, s.bp.rate_kbps, s.temp.rate_kbps) == (12, 8, 6, 2)
    sizes = [s.ecg.size_bytes, s.hr.size_bytes, s.spo2.size_bytes, s.bp.size_bytes,
             s.temp.size_bytes, s.fall.size_bytes]
    assert all(80 <= b <= 400 for b in sizes)
    # the event-based fall stream averages roughly 1 kbps
    fall_bps = s.fall.count * s.fall.size_bytes * 8 / s.fall.mean_interval_s
    assert 0.8e3 <= fall_bps <= 1.0e3


def test_default_jitter_and_qos():
    cfg = ScenarioConfig()
    up = cfg.links.uplink
    assert (up.delay_ms, up.jitter_low_ms, up.jitter_high_ms) == (30, 25, 35)
    q = cfg.qos
    assert (q.codel_target_ms, q.codel_interval_ms) == (5, 100)
    assert (q.fq_quantum_bytes, q.fq_queues, q.fq_limit) == (1514, 1024, 1000)


def test_ecg_rate_key():
    assert parse_config("sensors.ecg.rate_kbps = 256").ecg_rate_bps == 256_000


def test_range_error_names_the_field():
    with pytest.raises(ConfigError) as exc:
        parse_config("patients = 0")
    assert exc.value.field == "patients"
    assert "patients" in str(exc.value)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("seed = 1\n\nthis line is wrong\n")
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


@pytest.mark.parametrize(
    "text, field",
    [
        ("no.such.key = 1", "no.such.key"),
        ("seed = 1\nseed = 2", "seed"),
        ("seed =", "seed"),
        ("patients = many", "patients"),
        ("links.uplink.jitter_low_ms = 40", "links.uplink.jitter_low_ms"),
        ("sensors.ecg.size_bytes = 1500", "sensors.ecg.size_bytes"),
        ("sensors.hr.dscp = EF", "sensors.hr.dscp"),
        ("sweep.ecg_rates_kbps = 64, 32", "sweep.ecg_rates_kbps"),
        ("duration_s = 0", "duration_s"),
        ("links.uplink.rate_mbps = -1", "links.uplink.rate_mbps"),
    ],
)
def test_invalid_documents(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")


def test_load_from_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("sensors.ecg.rate_kbps = 64  # mid sweep\nseed = 7\n")
    cfg = load_config(path)
    assert cfg.ecg_rate_bps == 64_000 and cfg.seed == 7


def test_round_trip_defaults():
    cfg = ScenarioConfig()
    assert parse_config(dump_config(cfg)) == cfg
    assert len(dump_config(cfg).splitlines()) == len(known_keys())


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=1, max_value=1000, allow_nan=False),
    st.integers(min_value=1, max_value=50),
    st.integers(min_value=0, max_value=2**40),
    st.floats(min_value=0.001, max_value=100, allow_nan=False),
    st.booleans(),
)
def test_round_trip_property(ecg, patients, seed, uplink, email_on):
    cfg = ScenarioConfig().with_overrides({
        "sensors.ecg.rate_kbps": ecg,
        "patients": patients,
        "seed": seed,
        "links.uplink.rate_mbps": uplink,
        "email.enabled": email_on,
    })
    assert parse_config(dump_config(cfg)) == cfg


def test_presets():
    assert preset("default") == ScenarioConfig()
    assert preset("stress").links.uplink.rate_mbps == 4
    with pytest.raises(ConfigError):
        preset("nope")


def test_with_ecg_rate():
    assert ScenarioConfig().with_ecg_rate(128).ecg_rate_bps == 128_000
