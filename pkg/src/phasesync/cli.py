"""Command-line front end.

    phasesync analyze trace.csv [--train 25,50,200] [--test 1000] [--no-refine] [--out report.json]
    phasesync generate spec.cfg --out trace.csv
    phasesync simulate session.cfg [--seeds 100] --out reports/

Exit codes: 0 success, 1 usage error, 2 input parse error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .drift import EvalProtocol, train_size_sweep
from .errors import ConfigError, InvalidSpec, ParseError, PhaseSyncError, TooShort
from .estimator import EstimateOptions, estimate
from .io import (
    ANALYSIS_SCHEMA,
    ANALYSIS_SCHEMA_ID,
    SUMMARY_SCHEMA,
    SUMMARY_SCHEMA_ID,
    SYNC_SCHEMA,
    SYNC_SCHEMA_ID,
    DeviceRecords,
    dumps,
    format_trace_csv,
    parse_flat_config,
    read_trace_csv,
    real,
    session_from_config,
    trace_specs_from_config,
)
from .model import FrameIndexAssignment, frame_indices
from .noise import NoiseClassification, NormalityResult, classify
from .sim import SKEW_TARGET_NS, SyncReport, run_session, session_for_seed
from .synth import generate

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _normality_doc(r: NormalityResult) -> dict:
    return {"statistic": real(r.statistic), "passed": r.passed, "p_value": real(r.p_value), "degenerate": r.degenerate}


def _noise_doc(c: NoiseClassification) -> dict:
    return {
        "regime": c.regime.value,
        "drop_rate": real(c.drop_rate),
        "significance": real(c.significance),
        "pooled": _normality_doc(c.pooled),
        "clusters": [
            {"k": n.k, "count": n.count, "tested": n.tested,
             "normality": _normality_doc(n.result) if n.result is not None else None}
            for n in c.normality
        ],
    }


def _model_doc(m) -> dict:
    return {"phase_ns": real(m.phase_ns), "period_ns": real(m.period_ns), "noise_sigma_ns": real(m.noise_sigma_ns)}


def frame_seq_mismatches(frame_seq, timestamps, model) -> int:
    """Number of gaps where the device counter disagrees with the estimated index step."""
    est = np.diff(frame_indices(np.asarray(timestamps), model.period_ns, model.phase_ns))
    dev = np.diff(np.asarray(frame_seq, dtype=np.int64))
    return int(np.count_nonzero(est != dev))


def analyze_device(rec: DeviceRecords, protocol: EvalProtocol, refine: bool) -> tuple[dict, bool]:
    """Report entry for one device; the flag is False when the device failed."""
    doc = {"device_id": rec.device_id, "n_samples": len(rec.timestamps), "status": "ok",
           "model": None, "estimate": None, "noise": None, "drift": [], "warnings": []}
    warn = doc["warnings"].append
    try:
        trace = rec.trace()
        est = estimate(trace, EstimateOptions(refine=refine))
    except PhaseSyncError as exc:
        doc["status"] = "failed"
        warn(f"estimation failed: {type(exc).__name__}: {exc}")
        return doc, False

    doc["model"] = _model_doc(est.model)
    doc["estimate"] = {
        "tau_init_ns": real(est.tau_init_ns),
        "objective": real(est.objective),
        "refined": est.refined,
        "iterations": est.iterations,
        "clusters": [{"k": c.k, "count": c.count, "tau_hat_ns": real(c.tau_hat_ns),
                      "sigma_hat_ns": real(c.sigma_hat_ns)} for c in est.clusters],
    }
    n_bad = frame_seq_mismatches(rec.frame_seq, rec.timestamps, est.model)
    if n_bad:
        warn(f"frame_seq gaps disagree with estimated frame-index gaps at {n_bad} of {len(trace) - 1} positions")

    try:
        doc["noise"] = _noise_doc(classify(trace))
    except PhaseSyncError as exc:
        warn(f"noise classification skipped: {type(exc).__name__}: {exc}")

    n = len(trace)
    sizes = tuple(s for s in protocol.train_sizes if n >= s + 2)
    for s in protocol.train_sizes:
        if s not in sizes:
            warn(f"drift for train size {s} skipped: trace has only {n} samples")
    if sizes:
        try:
            reports = train_size_sweep(trace, EvalProtocol(sizes, protocol.test_size),
                                       None if refine else EstimateOptions(refine=False, min_samples=min(10, min(sizes))))
        except PhaseSyncError as exc:
            warn(f"drift evaluation failed: {type(exc).__name__}: {exc}")
        else:
            for r in reports:
                doc["drift"].append({
                    "train_size": r.train_size,
                    "test_size": len(r.residual_times),
                    "drift_ms_per_min": real(r.drift_ms_per_min),
                    "slope_sign": r.slope_sign,
                    "fit": _model_doc(r.fit),
                    "residual_series": [[int(t), real(v)] for t, v in r.residual_series],
                })
    return doc, True


def cmd_analyze(args) -> int:
    try:
        records, digest = read_trace_csv(args.input)
    except ParseError as exc:
        print(f"{args.input}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    protocol = EvalProtocol(args.train, args.test)
    devices, ok = [], True
    for rec in records:
        doc, good = analyze_device(rec, protocol, not args.no_refine)
        devices.append(doc)
        ok &= good
        for w in doc["warnings"]:
            print(f"warning: {rec.device_id}: {w}", file=sys.stderr)
    report = {
        "schema": ANALYSIS_SCHEMA_ID,
        "toolkit_version": __version__,
        "input_digest": digest,
        "options": {"train_sizes": list(args.train), "test_size": args.test, "refine": not args.no_refine},
        "devices": devices,
    }
    jsonschema.validate(report, ANALYSIS_SCHEMA)
    _emit(dumps(report), args.out)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_generate(args) -> int:
    try:
        specs = trace_specs_from_config(parse_flat_config(Path(args.spec).read_text("utf-8")))
        pairs = []
        for spec in specs:
            g = generate(spec)
            pairs.append((g.trace, g.true_indices.indices - g.true_indices.indices[0]))
    except (InvalidSpec, ConfigError) as exc:
        print(f"{args.spec}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        text = format_trace_csv(pairs)
    except ValueError as exc:
        print(f"{args.spec}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    Path(args.out).write_bytes(text.encode("utf-8"))
    return EXIT_OK


def sync_report_doc(seed: int, report: SyncReport | None, error: str | None = None) -> dict:
    doc = {"schema": SYNC_SCHEMA_ID, "toolkit_version": __version__, "seed": seed}
    if report is None:
        doc.update(status="failed", error=error)
        return doc
    doc.update(
        status="ok",
        max_skew_ns=real(report.max_skew_ns),
        pairwise_skews=[{"a": p.a, "b": p.b, "skew_ns": real(p.skew_ns)} for p in report.pairwise_skews],
        offset_errors_ns={k: real(v) for k, v in report.offset_errors_ns.items()},
        rounds_used=dict(report.rounds_used),
        shifts_ns={k: real(v) for k, v in report.shifts_ns.items()},
        fitted_periods_ns={k: real(v) for k, v in report.fitted_periods_ns.items()},
    )
    return doc


def summarize(skews: list[float], n_seeds: int, n_failed: int) -> dict:
    within = sum(s <= SKEW_TARGET_NS for s in skews)
    return {
        "schema": SUMMARY_SCHEMA_ID,
        "toolkit_version": __version__,
        "n_seeds": n_seeds,
        "n_failed": n_failed,
        "target_ns": real(SKEW_TARGET_NS),
        # failed sessions count against the target
        "fraction_within_target": real(within / n_seeds),
        "max_skew_ns": real(max(skews)) if skews else None,
        "median_skew_ns": real(statistics.median(skews)) if skews else None,
    }


def cmd_simulate(args) -> int:
    try:
        config, net = session_from_config(parse_flat_config(Path(args.config).read_text("utf-8")))
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skews, failed = [], 0
    width = len(str(config.seed + args.seeds - 1))
    for seed in range(config.seed, config.seed + args.seeds):
        try:
            report = run_session(*session_for_seed(config, net, seed))
        except PhaseSyncError as exc:
            failed += 1
            doc = sync_report_doc(seed, None, f"{type(exc).__name__}: {exc}")
            print(f"warning: seed {seed}: {doc['error']}", file=sys.stderr)
        else:
            skews.append(report.max_skew_ns)
            doc = sync_report_doc(seed, report)
        jsonschema.validate(doc, SYNC_SCHEMA)
        (out / f"seed-{seed:0{width}d}.json").write_text(dumps(doc), "utf-8")
    summary = summarize(skews, args.seeds, failed)
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    (out / "summary.json").write_text(dumps(summary), "utf-8")
    if skews:
        print(f"seeds={args.seeds} failed={failed} max_skew_us={max(skews) / 1e3:.3f} "
              f"median_skew_us={statistics.median(skews) / 1e3:.3f} "
              f"within_{SKEW_TARGET_NS / 1e3:.0f}us={summary['fraction_within_target']}")
    else:
        print(f"seeds={args.seeds} failed={failed} (no successful sessions)")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, "utf-8")


def _train_sizes(text):
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("train sizes must be positive")
    return sizes


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasesync", description="Camera frame-timestamp phase analysis and sync simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="fit phase models and drift metrics to a trace CSV")
    a.add_argument("input")
    a.add_argument("--train", type=_train_sizes, default=(25, 50, 200), help="training sizes (default 25,50,200)")
    a.add_argument("--test", type=_positive, default=1000, help="test window length (default 1000)")
    a.add_argument("--no-refine", action="store_true", help="skip the exact refinement stage")
    a.add_argument("--out", help="report path (default stdout)")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("generate", help="write a synthetic trace CSV from a spec file")
    g.add_argument("spec")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run seeded multi-device sync sessions")
    s.add_argument("config")
    s.add_argument("--seeds", type=_positive, default=100)
    s.add_argument("--out", required=True, help="directory for per-seed reports and summary.json")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
