"""Seeded generator of synthetic camera timestamp traces.

Frames sit on the grid ``tau0 + N * tau`` plus a per-segment phase offset.
Each frame survives an independent drop draw. Survivors get a linear clock
skew evaluated at their nominal time plus i.i.d. Gaussian jitter, then are
rounded to integer nanoseconds.

Draw order from a single :class:`~phasesync.rng.SplitMix64` stream:

1. one uniform per nominal frame for the drop decision;
2. one Gaussian per surviving frame for the jitter;
3. if a jittered timestamp does not exceed its predecessor, that frame's
   jitter is redrawn (one Gaussian at a time, scanning forward) until it does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidSpec, TraceError
from .model import FrameIndexAssignment, PhaseModel, TimestampTrace, TraceSource, normalize_phase, validate_trace
from .rng import SplitMix64

NS_PER_MIN = 60e9
DEFAULT_FPS = 30
PREVIEW_SECONDS = 15
VIDEO_SECONDS = 45
DEFAULT_JITTER_NS = 200_000.0


@dataclass(frozen=True)
class TraceSpec:
    tau_ns: float
    tau0_ns: float
    n_frames: int
    jitter_sigma_ns: float = 0.0
    drop_prob: float = 0.0
    skew_ns_per_min: float = 0.0
    segments: tuple | None = None
    seed: int = 0
    device_id: str = "synthetic"

    def validate(self):
        if not (math.isfinite(self.tau_ns) and self.tau_ns >= 1):
            raise InvalidSpec("tau_ns", "must be a finite period of at least 1 ns")
        if not math.isfinite(self.tau0_ns):
            raise InvalidSpec("tau0_ns", "must be finite")
        if int(self.n_frames) != self.n_frames or self.n_frames < 2:
            raise InvalidSpec("n_frames", "must be an integer >= 2")
        if not (0 <= self.jitter_sigma_ns < self.tau_ns / 4):
            raise InvalidSpec("jitter_sigma_ns", "must lie in [0, tau_ns/4)")
        if not (0 <= self.drop_prob < 1):
            raise InvalidSpec("drop_prob", "must lie in [0, 1)")
        if not math.isfinite(self.skew_ns_per_min):
            raise InvalidSpec("skew_ns_per_min", "must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpec("seed", "must be an unsigned 64-bit integer")
        if self.segments is not None:
            if not self.segments:
                raise InvalidSpec("segments", "must not be empty")
            for n, off in self.segments:
                if int(n) != n or n < 1 or not math.isfinite(off):
                    raise InvalidSpec("segments", "each segment needs n_frames >= 1 and a finite offset")
            if sum(n for n, _ in self.segments) != self.n_frames:
                raise InvalidSpec("segments", "segment lengths must add up to n_frames")
        return self

    def segment_offsets(self) -> np.ndarray:
        """Phase offset of every nominal frame."""
        if self.segments is None:
            return np.zeros(int(self.n_frames))
        return np.concatenate([np.full(int(n), float(off)) for n, off in self.segments])

    def segment_bounds(self) -> list[tuple[int, int]]:
        """Nominal-frame ``[start, stop)`` ranges of the segments."""
        segs = self.segments or ((self.n_frames, 0.0),)
        out, start = [], 0
        for n, _ in segs:
            out.append((start, start + int(n)))
            start += int(n)
        return out


class GeneratedTrace(NamedTuple):
    trace: TimestampTrace
    ground_truth: PhaseModel
    true_indices: FrameIndexAssignment
    redraws: int


def generate(spec: TraceSpec) -> GeneratedTrace:
    """Run the timestamping model forward for ``spec``.

    The result is a pure function of the spec (seed included).
    """
    spec.validate()
    rng = SplitMix64(int(spec.seed))
    n_total = int(spec.n_frames)

    keep = rng.uniform(n_total) >= spec.drop_prob
    nominal_idx = np.flatnonzero(keep)
    if nominal_idx.size < 2:
        raise InvalidSpec("drop_prob", "fewer than 2 frames survived the drop draw")

    nominal = spec.tau0_ns + nominal_idx * spec.tau_ns + spec.segment_offsets()[nominal_idx]
    base = nominal + spec.skew_ns_per_min / NS_PER_MIN * nominal
    jitter = spec.jitter_sigma_ns * rng.normal(nominal_idx.size)
    t = np.rint(base + jitter).astype(np.int64)

    redraws = 0
    for i in range(1, t.size):
        while t[i] <= t[i - 1]:
            t[i] = np.int64(np.rint(base[i] + spec.jitter_sigma_ns * rng.normal(1)[0]))
            redraws += 1

    try:
        trace = validate_trace(t, spec.device_id, TraceSource.SYNTHETIC)
    except TraceError as exc:  # pragma: no cover - guarded by the redraw loop
        raise InvalidSpec("tau_ns", str(exc)) from exc

    phase = normalize_phase(float(spec.tau0_ns), float(spec.tau_ns))
    shift = round((spec.tau0_ns - phase) / spec.tau_ns)
    truth = PhaseModel(phase, spec.tau_ns, spec.jitter_sigma_ns)
    return GeneratedTrace(trace, truth, FrameIndexAssignment(nominal_idx + shift, spec.tau_ns), redraws)


def preview_video_spec(
    jitter_sigma_ns: float = DEFAULT_JITTER_NS,
    drop_prob: float = 0.0,
    skew_ns_per_min: float = 0.0,
    phase_offset_ns: float = 0.0,
    seed: int = 0,
    tau0_ns: float | None = None,
    fps: float = DEFAULT_FPS,
    device_id: str = "synthetic",
) -> TraceSpec:
    """One minute at ``fps``: 15 s of preview then 45 s of video.

    ``phase_offset_ns`` is added to the video segment only.
    """
    tau = 1e9 / fps
    n_preview = round(PREVIEW_SECONDS * fps)
    n_video = round(VIDEO_SECONDS * fps)
    return TraceSpec(
        tau_ns=tau,
        tau0_ns=tau / 2 if tau0_ns is None else tau0_ns,
        n_frames=n_preview + n_video,
        jitter_sigma_ns=jitter_sigma_ns,
        drop_prob=drop_prob,
        skew_ns_per_min=skew_ns_per_min,
        segments=((n_preview, 0.0), (n_video, float(phase_offset_ns))),
        seed=seed,
        device_id=device_id,
    )


def split_segments(generated: GeneratedTrace, spec: TraceSpec) -> list[TimestampTrace]:
    """Cut a generated trace into its segments (e.g. preview and video)."""
    shift = round((spec.tau0_ns - generated.ground_truth.phase_ns) / spec.tau_ns)
    nominal = generated.true_indices.indices - shift
    out = []
    for start, stop in spec.segment_bounds():
        sel = (nominal >= start) & (nominal < stop)
        out.append(TimestampTrace(generated.trace.device_id, generated.trace.timestamps[sel], generated.trace.source))
    return out
