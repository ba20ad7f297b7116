"""Drift coefficient: how fast a fitted phase model goes stale.

A model is fitted on a training prefix of the trace. Its wrapped residuals on a
trailing test window are unwrapped into a continuous series and the absolute
slope of their least-squares line against time, in ms per minute, is the drift
coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TooShort, UnwrapAmbiguous
from .estimator import EstimateOptions, estimate, estimate_phase
from .model import FrameIndexAssignment, PhaseModel, TimestampTrace, frame_indices, residuals, wrap

MS_PER_MIN_PER_UNIT_SLOPE = 60_000.0
DEFAULT_TRAIN_SIZES = (25, 50, 200)
DEFAULT_TEST_SIZE = 1000
# a residual step this close to half a period cannot be unwrapped reliably
AMBIGUOUS_STEP_FRACTION = 0.375
MAX_AMBIGUOUS_STEPS = 1


@dataclass(frozen=True, eq=False)
class DriftReport:
    train_size: int
    drift_ms_per_min: float
    slope_sign: int
    residual_times: np.ndarray
    residual_values: np.ndarray
    fit: PhaseModel

    @property
    def residual_series(self):
        return list(zip(self.residual_times.tolist(), self.residual_values.tolist()))


@dataclass(frozen=True)
class EvalProtocol:
    train_sizes: tuple = DEFAULT_TRAIN_SIZES
    test_size: int = DEFAULT_TEST_SIZE

    def __post_init__(self):
        object.__setattr__(self, "train_sizes", tuple(int(n) for n in self.train_sizes))
        if not self.train_sizes or min(self.train_sizes) < 1 or self.test_size < 1:
            raise ValueError("train and test sizes must be positive")


def unwrap_residuals(values: np.ndarray, period: float) -> np.ndarray:
    """Continue wrapped residuals across period jumps by nearest multiple.

    Raises:
        UnwrapAmbiguous: more than one step lands near the half-period
            decision boundary, i.e. the drift is too fast to follow.
    """
    if values.size < 2:
        return values.astype(np.float64)
    steps = wrap(np.diff(values), period)
    if np.count_nonzero(np.abs(steps) > AMBIGUOUS_STEP_FRACTION * period) > MAX_AMBIGUOUS_STEPS:
        raise UnwrapAmbiguous("consecutive residual steps repeatedly approach half a period")
    return values[0] + np.concatenate([[0.0], np.cumsum(steps)])


def _test_window(n: int, train_size: int, test_size: int) -> int:
    if n < train_size + 2:
        raise TooShort(f"trace has {n} samples, need at least train_size + 2 = {train_size + 2}")
    return min(test_size, n - train_size)


def _drift_on_window(trace, model, train_size, test_n) -> DriftReport:
    test = trace.tail(test_n)
    # no collision check: a stale model may legitimately drift across a slot
    # boundary, and only the wrapped misfit matters here
    idx = frame_indices(test.timestamps, model.period_ns, model.phase_ns)
    res = residuals(test, model, FrameIndexAssignment(idx, model.period_ns)).values
    unwrapped = unwrap_residuals(res, model.period_ns)
    times = test.timestamps
    if test_n >= 2:
        rel = (times - times[0]).astype(np.float64)
        slope = float(np.polyfit(rel, unwrapped, 1)[0])
    else:
        slope = 0.0
    return DriftReport(
        train_size=train_size,
        drift_ms_per_min=abs(slope) * MS_PER_MIN_PER_UNIT_SLOPE,
        slope_sign=1 if slope >= 0 else -1,
        residual_times=times.copy(),
        residual_values=res.copy(),
        fit=model,
    )


def drift_coefficient(trace: TimestampTrace, train_size: int, test_size: int = DEFAULT_TEST_SIZE,
                      options: EstimateOptions | None = None) -> DriftReport:
    """Fit on the first ``train_size`` samples, measure drift on the last ``test_size``.

    The test window never overlaps the training prefix; it is shortened when
    the trace is too short for both.
    """
    test_n = _test_window(len(trace), train_size, test_size)
    opts = options or EstimateOptions(min_samples=min(10, train_size))
    model = estimate(trace.head(train_size), opts).model
    return _drift_on_window(trace, model, train_size, test_n)


def train_size_sweep(trace: TimestampTrace, protocol: EvalProtocol | None = None,
                     options: EstimateOptions | None = None) -> list[DriftReport]:
    """One drift report per training size, all sharing one test window."""
    protocol = protocol or EvalProtocol()
    test_n = _test_window(len(trace), max(protocol.train_sizes), protocol.test_size)
    reports = []
    for n in protocol.train_sizes:
        opts = options or EstimateOptions(min_samples=min(10, n))
        model = estimate(trace.head(n), opts).model
        reports.append(_drift_on_window(trace, model, n, test_n))
    return reports


def mode_switch_check(preview: TimestampTrace, video: TimestampTrace, model: PhaseModel) -> float:
    """Phase jump of ``video`` relative to a model fitted on ``preview``.

    Returns the circular-mean phase of the video timestamps under the model
    period minus the model phase, wrapped into ``[-period/2, period/2)``.
    """
    del preview  # the model already carries everything fitted from preview
    phase = estimate_phase(video, model.period_ns)
    return float(wrap(phase - model.phase_ns, model.period_ns))
