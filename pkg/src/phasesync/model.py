"""Periodic timestamping model: traces, phase models, frame indices, residuals.

A camera capturing at a constant period produces timestamps

    t_i = phase + N_i * period + noise_i

where ``N_i`` is the integer slot of the capture on the periodic grid. Frame
drops show up as gaps in ``N``. All timestamps enter as integer nanoseconds;
model parameters are real-valued nanoseconds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    DuplicateTimestamp,
    EmptyTrace,
    IndexCollision,
    LengthMismatch,
    NonMonotonic,
    NonPositivePeriod,
)


class TraceSource(str, enum.Enum):
    RECORDED = "recorded"
    SYNTHETIC = "synthetic"


def _frozen_array(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimestampTrace:
    """Strictly increasing capture timestamps of one device, in integer ns.

    Build instances through :func:`validate_trace`; the constructor does not
    re-check ordering.
    """

    device_id: str
    timestamps: np.ndarray
    source: TraceSource = TraceSource.RECORDED

    def __post_init__(self):
        object.__setattr__(self, "timestamps", _frozen_array(self.timestamps, np.int64))
        object.__setattr__(self, "source", TraceSource(self.source))

    def __len__(self):
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, TimestampTrace):
            return NotImplemented
        return (
            self.device_id == other.device_id
            and self.source == other.source
            and np.array_equal(self.timestamps, other.timestamps)
        )

    __hash__ = None

    def diffs(self) -> np.ndarray:
        return np.diff(self.timestamps)

    def head(self, n: int) -> "TimestampTrace":
        return TimestampTrace(self.device_id, self.timestamps[:n], self.source)

    def tail(self, n: int) -> "TimestampTrace":
        return TimestampTrace(self.device_id, self.timestamps[len(self) - n:], self.source)

    def shifted(self, offset_ns: int) -> "TimestampTrace":
        return TimestampTrace(self.device_id, self.timestamps + np.int64(offset_ns), self.source)


@dataclass(frozen=True)
class PhaseModel:
    """Fitted periodic grid. ``phase_ns`` is normalized into ``[0, period_ns)``."""

    phase_ns: float
    period_ns: float
    noise_sigma_ns: float = 0.0

    def __post_init__(self):
        period = float(self.period_ns)
        if not period > 0 or not math.isfinite(period):
            raise NonPositivePeriod(f"period must be positive and finite, got {self.period_ns!r}")
        if self.noise_sigma_ns < 0:
            raise ValueError("noise_sigma_ns must be nonnegative")
        object.__setattr__(self, "period_ns", period)
        object.__setattr__(self, "phase_ns", normalize_phase(float(self.phase_ns), period))
        object.__setattr__(self, "noise_sigma_ns", float(self.noise_sigma_ns))

    def predict(self, indices) -> np.ndarray:
        """Model capture instants ``phase + N * period`` for frame indices ``N``."""
        return self.phase_ns + np.asarray(indices, dtype=np.float64) * self.period_ns


@dataclass(frozen=True, eq=False)
class FrameIndexAssignment:
    indices: np.ndarray
    tau_used_ns: float

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen_array(self.indices, np.int64))

    def __len__(self):
        return len(self.indices)

    def gaps(self) -> np.ndarray:
        """Index increments between consecutive frames; values > 1 mark drops."""
        return np.diff(self.indices)


@dataclass(frozen=True, eq=False)
class Residuals:
    """Signed misfits ``t_i - (phase + N_i * period)`` wrapped into [-period/2, period/2)."""

    values: np.ndarray
    period_ns: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, np.float64))

    def __len__(self):
        return len(self.values)

    def sum_of_squares(self) -> float:
        return float(np.dot(self.values, self.values))


def normalize_phase(phase: float, period: float) -> float:
    """Map ``phase`` into ``[0, period)``."""
    p = math.fmod(phase, period)
    if p < 0:
        p += period
    # fmod of a tiny negative value plus period can round up to period itself
    if p >= period:
        p = 0.0
    return p


def wrap(values, period):
    """Wrap values into ``[-period/2, period/2)`` (congruent modulo ``period``)."""
    v = np.asarray(values, dtype=np.float64)
    w = v - period * np.floor(v / period + 0.5)
    w = np.where(w >= period / 2, w - period, w)
    w = np.where(w < -period / 2, w + period, w)
    return w


def validate_trace(raw_timestamps, device_id: str = "", source=TraceSource.RECORDED) -> TimestampTrace:
    """Check ordering of raw integer-ns timestamps and build a trace.

    Raises:
        EmptyTrace: fewer than two timestamps.
        DuplicateTimestamp: a timestamp equals its predecessor.
        NonMonotonic: a timestamp precedes its predecessor.
    """
    arr = np.asarray(raw_timestamps)
    if arr.ndim != 1:
        raise ValueError("timestamps must be a one-dimensional sequence")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("timestamps must be integer nanoseconds")
    elif arr.size and arr.dtype.kind not in "iu":
        raise ValueError("timestamps must be integer nanoseconds")
    if arr.size < 2:
        raise EmptyTrace(f"a trace needs at least 2 timestamps, got {arr.size}")
    arr = arr.astype(np.int64)
    d = np.diff(arr)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        if d[bad[0]] == 0:
            raise DuplicateTimestamp(i)
        raise NonMonotonic(i)
    return TimestampTrace(device_id, arr, source)


def assign_frame_index(t, tau) -> int:
    """Nearest grid slot ``floor(t / tau + 0.5)``; exact halves round upward."""
    if not tau > 0:
        raise NonPositivePeriod(f"period must be positive, got {tau!r}")
    return int(math.floor(t / tau + 0.5))


def frame_indices(times, tau, phase=0.0) -> np.ndarray:
    """Vectorized :func:`assign_frame_index` applied to ``times - phase``."""
    if not tau > 0:
        raise NonPositivePeriod(f"period must be positive, got {tau!r}")
    t = np.asarray(times)
    return np.floor((t - phase) / tau + 0.5).astype(np.int64)


def assign_indices(trace: TimestampTrace, model: PhaseModel) -> FrameIndexAssignment:
    """Frame slot of every timestamp under ``model``.

    Raises:
        IndexCollision: two timestamps land in the same slot, which means the
            model period is far too long for this trace.
    """
    n = frame_indices(trace.timestamps, model.period_ns, model.phase_ns)
    same = np.flatnonzero(np.diff(n) == 0)
    if same.size:
        raise IndexCollision(int(same[0]) + 1)
    return FrameIndexAssignment(n, model.period_ns)


def _raw_misfit(trace: TimestampTrace, model: PhaseModel, indices: np.ndarray) -> np.ndarray:
    # Offsets relative to the first sample keep float error at the ulp of the
    # trace span rather than of the absolute clock reading.
    t = trace.timestamps
    n = np.asarray(indices, dtype=np.int64)
    anchor = Fraction(int(t[0])) - Fraction(model.phase_ns) - int(n[0]) * Fraction(model.period_ns)
    rel_t = (t - t[0]).astype(np.float64)
    rel_n = (n - n[0]).astype(np.float64)
    return rel_t - rel_n * model.period_ns + float(anchor)


def residuals(trace: TimestampTrace, model: PhaseModel, assignment: FrameIndexAssignment) -> Residuals:
    """Wrapped misfit of each timestamp against its assigned grid slot."""
    if len(assignment) != len(trace):
        raise LengthMismatch(f"assignment has {len(assignment)} indices for {len(trace)} timestamps")
    raw = _raw_misfit(trace, model, assignment.indices)
    return Residuals(wrap(raw, model.period_ns), model.period_ns)


def objective(trace: TimestampTrace, model: PhaseModel, indices) -> float:
    """Unwrapped sum of squares ``sum (phase + N_i*period - t_i)^2``."""
    if len(indices) != len(trace):
        raise LengthMismatch(f"{len(indices)} indices for {len(trace)} timestamps")
    raw = _raw_misfit(trace, model, np.asarray(indices))
    return float(np.dot(raw, raw))
