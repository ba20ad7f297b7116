import json

import pytest

from phasesync.errors import ConfigError, InvalidSpec, ParseError
from phasesync.io import (
    format_trace_csv,
    parse_flat_config,
    parse_trace_csv,
    real,
    session_from_config,
    trace_specs_from_config,
)
from phasesync.model import validate_trace

HEADER = "device_id,frame_seq,timestamp_ns\n"


def test_parse_interleaved_devices_keep_first_appearance():
    recs = parse_trace_csv(HEADER + "b,0,10\na,0,5\nb,1,20\na,1,15\n")
    assert [r.device_id for r in recs] == ["b", "a"]
    assert recs[0].timestamps == [10, 20]
    assert recs[1].frame_seq == [0, 1]


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("a,b,c\n", 1),
        (HEADER, 2),
        (HEADER + "a,0,10\na,1\n", 3),
        (HEADER + "a,0,10\na,x,20\n", 3),
        (HEADER + "a,0,-1\n", 2),
        (HEADER + "a,0,10\na,1,10\n", 3),
        (HEADER + "a,0,10\nb,0,1\na,1,5\n", 4),
        (HEADER + ",0,10\n", 2),
    ],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_trace_csv(text)
    assert exc.value.line == line


def test_format_round_trip():
    a = validate_trace([1, 5, 9], "cam-a")
    b = validate_trace([2, 3], "cam-b")
    text = format_trace_csv([(a, [0, 1, 3]), (b, None)])
    assert text.startswith(HEADER)
    assert text.endswith("\n") and "\r" not in text
    recs = parse_trace_csv(text)
    assert [(r.device_id, r.frame_seq, r.timestamps) for r in recs] == [
        ("cam-a", [0, 1, 3], [1, 5, 9]),
        ("cam-b", [0, 1], [2, 3]),
    ]


def test_flat_config_comments_and_case():
    cfg = parse_flat_config("# comment\nPeriod_ns = 5  ; trailing\nseed=3\n")
    assert cfg == {"Period_ns": "5", "seed": "3"}


def test_session_config_requires_period():
    with pytest.raises(ConfigError) as exc:
        session_from_config({"n_devices": "2"})
    assert exc.value.field == "period_ns"


def test_session_config_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError) as exc:
        session_from_config({"period_ns": "10", "speed": "1"})
    assert exc.value.field == "speed"
    with pytest.raises(ConfigError) as exc:
        session_from_config({"period_ns": "ten"})
    assert exc.value.field == "period_ns"
    with pytest.raises(ConfigError) as exc:
        session_from_config({"period_ns": "10", "loss_prob": "1.5"})
    assert exc.value.field == "loss_prob"


def test_session_config_maps_network_keys():
    cfg, net = session_from_config({"period_ns": "33333333", "latency_jitter_ns": "0", "n_devices": "3"})
    assert cfg.period_ns == 33333333 and cfg.n_devices == 3
    assert net.latency_jitter_sigma_ns == 0


def test_trace_spec_config_protocol_and_custom():
    specs = trace_specs_from_config({"protocol": "preview_video", "n_devices": "2", "seed": "4"})
    assert [s.n_frames for s in specs] == [1800, 1800]
    assert [s.seed for s in specs] == [4, 5]
    (spec,) = trace_specs_from_config({"tau_ns": "1000", "n_frames": "10", "segments": "4:0, 6:250"})
    assert spec.segments == ((4, 0.0), (6, 250.0))


@pytest.mark.parametrize(
    "values, field",
    [
        ({"tau_ns": "1000", "n_frames": "0"}, "n_frames"),
        ({"n_frames": "10"}, "tau_ns"),
        ({"tau_ns": "1000", "n_frames": "10", "bogus": "1"}, "bogus"),
        ({"protocol": "other"}, "protocol"),
    ],
)
def test_trace_spec_config_errors_name_field(values, field):
    with pytest.raises(InvalidSpec) as exc:
        trace_specs_from_config(values)
    assert exc.value.field == field


def test_real_encoding_is_lossless():
    assert real(5.0) == 5
    assert real(2) == 2
    x = 33333333.333333332
    assert real(x) == repr(x) and float(real(x)) == x
    assert real(float("nan")) is None
    assert json.loads(json.dumps(real(0.1))) == "0.1"
