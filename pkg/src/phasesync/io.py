"""File formats: trace CSV, flat key-value configs, JSON reports.

Trace CSV
    UTF-8, LF endings, header ``device_id,frame_seq,timestamp_ns``. Rows of one
    device must be in increasing timestamp order; devices may interleave.

Flat config
    ``key = value`` lines, ``#`` or ``;`` comments, no sections.

Reports
    JSON with a ``schema`` tag. Integers stay integers; fractional reals are
    written as decimal strings (``repr`` of the double) so they round-trip
    exactly in any language.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidSpec, ParseError
from .model import TimestampTrace, validate_trace
from .sim import NetworkModel, SessionConfig
from .synth import TraceSpec, preview_video_spec

CSV_HEADER = ("device_id", "frame_seq", "timestamp_ns")
ANALYSIS_SCHEMA_ID = "phasesync.analysis/1"
SYNC_SCHEMA_ID = "phasesync.sync/1"
SUMMARY_SCHEMA_ID = "phasesync.simulate-summary/1"


@dataclass
class DeviceRecords:
    device_id: str
    frame_seq: list
    timestamps: list

    def trace(self) -> TimestampTrace:
        return validate_trace(np.array(self.timestamps, dtype=np.int64), self.device_id)


def _parse_int(text, line, name):
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(line, f"{name} {text!r} is not an integer") from None


def parse_trace_csv(text: str) -> list[DeviceRecords]:
    """Parse trace CSV text into per-device records in order of first appearance."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError(1, "empty input; expected header " + ",".join(CSV_HEADER))
    reader = csv.reader(lines)
    header = tuple(h.strip() for h in next(reader))
    if header != CSV_HEADER:
        raise ParseError(1, f"header must be {','.join(CSV_HEADER)}, got {','.join(header)}")
    devices: dict[str, DeviceRecords] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(line_no, f"expected 3 fields, got {len(row)}")
        dev = row[0].strip()
        if not dev:
            raise ParseError(line_no, "empty device_id")
        seq = _parse_int(row[1], line_no, "frame_seq")
        ts = _parse_int(row[2], line_no, "timestamp_ns")
        if ts < 0:
            raise ParseError(line_no, "timestamp_ns must be nonnegative")
        rec = devices.setdefault(dev, DeviceRecords(dev, [], []))
        if rec.timestamps and ts <= rec.timestamps[-1]:
            raise ParseError(line_no, f"timestamps of device {dev!r} must strictly increase")
        rec.frame_seq.append(seq)
        rec.timestamps.append(ts)
    if not devices:
        raise ParseError(2, "no data rows")
    return list(devices.values())


def read_trace_csv(path) -> tuple[list[DeviceRecords], str]:
    """Parse a trace CSV file; also returns ``sha256:<hex>`` of its bytes."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(1, f"input is not UTF-8: {exc}") from None
    return parse_trace_csv(text), "sha256:" + hashlib.sha256(data).hexdigest()


def format_trace_csv(traces) -> str:
    """CSV text for ``(trace, frame_seq)`` pairs; ``frame_seq`` may be None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for trace, seq in traces:
        if np.any(trace.timestamps < 0):
            raise ValueError(f"device {trace.device_id!r} has negative timestamps; CSV requires >= 0")
        seq = range(len(trace)) if seq is None else seq
        for s, t in zip(seq, trace.timestamps.tolist()):
            w.writerow((trace.device_id, int(s), int(t)))
    return buf.getvalue()


def write_trace_csv(path, traces) -> None:
    Path(path).write_bytes(format_trace_csv(traces).encode("utf-8"))


def parse_flat_config(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).replace("\n", " ")) from None
    return dict(parser["config"])


def _typed(values, key, kind, default=None, required=False, error=ConfigError):
    if key not in values:
        if required:
            raise error(key, "required key is missing")
        return default
    raw = values[key]
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw, 0)
        val = kind(raw)
    except ValueError:
        raise error(key, f"cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(val):
        raise error(key, "must be finite")
    return val


TRACE_SPEC_KEYS = {
    "protocol", "n_devices", "device_id", "tau_ns", "tau0_ns", "n_frames", "jitter_sigma_ns",
    "drop_prob", "skew_ns_per_min", "segments", "seed", "phase_offset_ns", "fps",
}


def _segments(raw):
    out = []
    for part in raw.split(","):
        n, _, off = part.strip().partition(":")
        out.append((int(n), float(off or 0.0)))
    return tuple(out)


def trace_specs_from_config(values: dict[str, str]) -> list[TraceSpec]:
    """Trace specs described by a generate config (one per device).

    ``protocol = preview_video`` selects the 15 s preview + 45 s video layout at
    ``fps`` (default 30); otherwise ``tau_ns`` and ``n_frames`` are required.
    Device ``k`` uses ``seed + k``.
    """
    unknown = sorted(set(values) - TRACE_SPEC_KEYS)
    if unknown:
        raise InvalidSpec(unknown[0], "unknown key")
    kw = dict(error=InvalidSpec)
    n_devices = _typed(values, "n_devices", int, 1, **kw)
    if n_devices < 1:
        raise InvalidSpec("n_devices", "must be >= 1")
    device_id = values.get("device_id", "synthetic")
    seed = _typed(values, "seed", int, 0, **kw)
    jitter = _typed(values, "jitter_sigma_ns", float, None, **kw)
    drop = _typed(values, "drop_prob", float, 0.0, **kw)
    skew = _typed(values, "skew_ns_per_min", float, 0.0, **kw)
    tau0 = _typed(values, "tau0_ns", float, None, **kw)
    protocol = values.get("protocol", "custom")

    specs = []
    for k in range(n_devices):
        dev = device_id if n_devices == 1 else f"{device_id}-{k}"
        if protocol == "preview_video":
            spec = preview_video_spec(
                jitter_sigma_ns=200_000.0 if jitter is None else jitter,
                drop_prob=drop,
                skew_ns_per_min=skew,
                phase_offset_ns=_typed(values, "phase_offset_ns", float, 0.0, **kw),
                seed=seed + k,
                tau0_ns=tau0,
                fps=_typed(values, "fps", float, 30.0, **kw),
                device_id=dev,
            )
        elif protocol == "custom":
            try:
                segs = _segments(values["segments"]) if "segments" in values else None
            except ValueError:
                raise InvalidSpec("segments", "expected 'n:offset, n:offset, ...'") from None
            spec = TraceSpec(
                tau_ns=_typed(values, "tau_ns", float, required=True, **kw),
                tau0_ns=0.0 if tau0 is None else tau0,
                n_frames=_typed(values, "n_frames", int, required=True, **kw),
                jitter_sigma_ns=0.0 if jitter is None else jitter,
                drop_prob=drop,
                skew_ns_per_min=skew,
                segments=segs,
                seed=seed + k,
                device_id=dev,
            )
        else:
            raise InvalidSpec("protocol", f"unknown protocol {protocol!r} (expected 'preview_video' or 'custom')")
        specs.append(spec.validate())
    return specs


SESSION_KEYS = {
    "period_ns": float, "n_devices": int, "camera_jitter_ns": float, "n_exchanges": int,
    "exchange_interval_ns": float, "train_frames": int, "video_frames": int, "max_retries": int,
    "offset_range_ns": float, "skew_range_ns_per_min": float, "period_rtol": float,
    "exposure_step_ns": float, "start_ns": float, "seed": int,
}
NETWORK_KEYS = {
    "base_latency_ns": ("base_latency_ns", float),
    "latency_jitter_ns": ("latency_jitter_sigma_ns", float),
    "asymmetry_ns": ("asymmetry_ns", float),
    "loss_prob": ("loss_prob", float),
}


def session_from_config(values: dict[str, str]) -> tuple[SessionConfig, NetworkModel]:
    """Session and network settings from a simulate config; ``period_ns`` is required."""
    unknown = sorted(set(values) - set(SESSION_KEYS) - set(NETWORK_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    kw = {k: _typed(values, k, kind, required=(k == "period_ns")) for k, kind in SESSION_KEYS.items()}
    kw = {k: v for k, v in kw.items() if v is not None}
    net_kw = {}
    for key, (field_name, kind) in NETWORK_KEYS.items():
        v = _typed(values, key, kind)
        if v is not None:
            net_kw[field_name] = v
    try:
        cfg = SessionConfig(**kw)
    except ValueError as exc:
        raise ConfigError(_field_from(str(exc), SESSION_KEYS), str(exc)) from None
    try:
        net = NetworkModel(**net_kw)
    except ValueError as exc:
        raise ConfigError(_field_from(str(exc), NETWORK_KEYS), str(exc)) from None
    return cfg, net


def _field_from(message, keys):
    for k in keys:
        if k in message:
            return k
    return "<config>"


def real(x):
    """JSON encoding of a real: int when integral, decimal string otherwise."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    if x.is_integer() and abs(x) < 2**53:
        return int(x)
    return repr(x)


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


_REAL = {"oneOf": [{"type": "integer"}, {"type": "string", "pattern": r"^-?[0-9]+(\.[0-9]+)?(e[-+]?[0-9]+)?$"}]}
_REAL_OR_NULL = {"oneOf": [{"type": "null"}, *_REAL["oneOf"]]}

_NORMALITY = {
    "type": "object",
    "required": ["statistic", "passed", "p_value", "degenerate"],
    "properties": {
        "statistic": _REAL_OR_NULL,
        "passed": {"type": "boolean"},
        "p_value": _REAL,
        "degenerate": {"type": "boolean"},
    },
}
_CLUSTER = {
    "type": "object",
    "required": ["k", "count", "tau_hat_ns", "sigma_hat_ns"],
    "properties": {"k": {"type": "integer", "minimum": 1}, "count": {"type": "integer", "minimum": 1},
                   "tau_hat_ns": _REAL, "sigma_hat_ns": _REAL},
}

ANALYSIS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "toolkit_version", "input_digest", "options", "devices"],
    "properties": {
        "schema": {"const": ANALYSIS_SCHEMA_ID},
        "toolkit_version": {"type": "string"},
        "input_digest": {"type": "string", "pattern": "^sha256:[0-9a-f]{64}$"},
        "options": {
            "type": "object",
            "required": ["train_sizes", "test_size", "refine"],
            "properties": {
                "train_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "test_size": {"type": "integer", "minimum": 1},
                "refine": {"type": "boolean"},
            },
        },
        "devices": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["device_id", "status", "n_samples", "model", "estimate", "noise", "drift", "warnings"],
                "properties": {
                    "device_id": {"type": "string"},
                    "status": {"enum": ["ok", "failed"]},
                    "n_samples": {"type": "integer", "minimum": 0},
                    "model": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["phase_ns", "period_ns", "noise_sigma_ns"],
                                "properties": {"phase_ns": _REAL, "period_ns": _REAL, "noise_sigma_ns": _REAL},
                            },
                        ]
                    },
                    "estimate": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["tau_init_ns", "objective", "refined", "iterations", "clusters"],
                                "properties": {
                                    "tau_init_ns": _REAL,
                                    "objective": _REAL,
                                    "refined": {"type": "boolean"},
                                    "iterations": {"type": "integer", "minimum": 0},
                                    "clusters": {"type": "array", "items": _CLUSTER},
                                },
                            },
                        ]
                    },
                    "noise": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["regime", "drop_rate", "significance", "clusters", "pooled"],
                                "properties": {
                                    "regime": {"enum": ["unimodal", "multi_cluster"]},
                                    "drop_rate": _REAL,
                                    "significance": _REAL,
                                    "pooled": _NORMALITY,
                                    "clusters": {
                                        "type": "array",
                                        "items": {
                                            "type": "object",
                                            "required": ["k", "count", "tested", "normality"],
                                            "properties": {
                                                "k": {"type": "integer"},
                                                "count": {"type": "integer"},
                                                "tested": {"type": "boolean"},
                                                "normality": {"oneOf": [{"type": "null"}, _NORMALITY]},
                                            },
                                        },
                                    },
                                },
                            },
                        ]
                    },
                    "drift": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["train_size", "test_size", "drift_ms_per_min", "slope_sign",
                                         "fit", "residual_series"],
                            "properties": {
                                "train_size": {"type": "integer", "minimum": 1},
                                "test_size": {"type": "integer", "minimum": 1},
                                "drift_ms_per_min": _REAL,
                                "slope_sign": {"enum": [-1, 1]},
                                "fit": {"type": "object"},
                                "residual_series": {
                                    "type": "array",
                                    "items": {"type": "array", "prefixItems": [{"type": "integer"}, _REAL],
                                              "minItems": 2, "maxItems": 2},
                                },
                            },
                        },
                    },
                    "warnings": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}

SYNC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "toolkit_version", "seed", "status"],
    "properties": {
        "schema": {"const": SYNC_SCHEMA_ID},
        "toolkit_version": {"type": "string"},
        "seed": {"type": "integer"},
        "status": {"enum": ["ok", "failed"]},
        "error": {"type": "string"},
        "max_skew_ns": _REAL,
        "pairwise_skews": {
            "type": "array",
            "items": {"type": "object", "required": ["a", "b", "skew_ns"],
                      "properties": {"a": {"type": "string"}, "b": {"type": "string"}, "skew_ns": _REAL}},
        },
        "offset_errors_ns": {"type": "object", "additionalProperties": _REAL},
        "rounds_used": {"type": "object", "additionalProperties": {"type": "integer"}},
        "shifts_ns": {"type": "object", "additionalProperties": _REAL},
        "fitted_periods_ns": {"type": "object", "additionalProperties": _REAL},
    },
    "if": {"properties": {"status": {"const": "ok"}}},
    "then": {"required": ["max_skew_ns", "pairwise_skews", "offset_errors_ns", "rounds_used"]},
    "else": {"required": ["error"]},
}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "toolkit_version", "n_seeds", "n_failed", "target_ns", "fraction_within_target",
                 "max_skew_ns", "median_skew_ns"],
    "properties": {
        "schema": {"const": SUMMARY_SCHEMA_ID},
        "toolkit_version": {"type": "string"},
        "n_seeds": {"type": "integer", "minimum": 1},
        "n_failed": {"type": "integer", "minimum": 0},
        "target_ns": _REAL,
        "fraction_within_target": _REAL,
        "max_skew_ns": _REAL_OR_NULL,
        "median_skew_ns": _REAL_OR_NULL,
    },
}
