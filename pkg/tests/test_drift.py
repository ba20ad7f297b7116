import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasesync.drift import EvalProtocol, drift_coefficient, mode_switch_check, train_size_sweep, unwrap_residuals
from phasesync.errors import TooShort, UnwrapAmbiguous
from phasesync.estimator import estimate
from phasesync.model import PhaseModel, validate_trace
from phasesync.synth import TraceSpec, generate, preview_video_spec, split_segments

TAU = 1e9 / 30


def protocol_trace(seed, sigma=2e5, skew=0.0):
    return generate(preview_video_spec(jitter_sigma_ns=sigma, skew_ns_per_min=skew, seed=seed)).trace


def test_sweep_shape_and_shared_window():
    reports = train_size_sweep(protocol_trace(0))
    assert [r.train_size for r in reports] == [25, 50, 200]
    first = reports[0].residual_times
    assert first.size == 1000
    for r in reports:
        assert np.array_equal(r.residual_times, first)
        assert r.drift_ms_per_min >= 0


def test_noiseless_integer_period_zero_drift():
    tr = generate(TraceSpec(33_333_333, 1_000_000, 1800)).trace
    assert all(r.drift_ms_per_min == 0 for r in train_size_sweep(tr))


def test_noiseless_30fps_negligible_drift():
    # only integer-ns rounding of a 33.33 ms grid remains
    tr = generate(preview_video_spec(jitter_sigma_ns=0.0)).trace
    assert all(r.drift_ms_per_min < 1e-5 for r in train_size_sweep(tr))


def test_drift_free_trace_below_threshold():
    # target: one drift-free 30 fps trace at sigma 0.2 ms, train 50
    assert drift_coefficient(protocol_trace(0), 50, 1000).drift_ms_per_min < 0.05


def test_injected_skew_recovered():
    # target: 1.0 ms/min injected skew recovered within 10%
    r = drift_coefficient(protocol_trace(0, skew=1e6), 50, 1000)
    assert r.drift_ms_per_min == pytest.approx(1.0, rel=0.10)


def test_skew_linearity():
    # target: doubling the skew doubles the drift within 5%
    ratios = []
    for seed in range(20):
        d1 = drift_coefficient(protocol_trace(seed, skew=1e6), 50).drift_ms_per_min
        d2 = drift_coefficient(protocol_trace(seed, skew=2e6), 50).drift_ms_per_min
        ratios.append(d2 / d1)
    assert np.median(ratios) == pytest.approx(2.0, rel=0.05)


def test_true_model_isolates_measurement_noise():
    # with the exact generating model the residual slope only carries jitter noise
    from phasesync.drift import _drift_on_window

    g = generate(preview_video_spec(seed=3))
    r = _drift_on_window(g.trace, g.ground_truth, 50, 1000)
    assert r.drift_ms_per_min < 0.2


def test_median_drift_improves_from_25_to_50():
    d25, d50 = [], []
    for seed in range(100):
        r = train_size_sweep(protocol_trace(seed, sigma=5e5), EvalProtocol((25, 50), 1000))
        d25.append(r[0].drift_ms_per_min)
        d50.append(r[1].drift_ms_per_min)
    assert np.median(d50) <= np.median(d25)


def test_test_window_never_overlaps_training():
    tr = generate(TraceSpec(TAU, 0, 300, 1e5, seed=1)).trace
    r = drift_coefficient(tr, 200, 1000)
    assert r.residual_times.size == 100
    assert r.residual_times[0] == tr.timestamps[200]


def test_too_short_for_split():
    tr = generate(TraceSpec(TAU, 0, 30, 1e5, seed=1)).trace
    with pytest.raises(TooShort):
        drift_coefficient(tr, 29)


def test_unwrap_residuals_follows_slow_ramp():
    tau = 100.0
    true = np.linspace(0, 250, 60)
    wrapped = (true + 50) % tau - 50
    out = unwrap_residuals(wrapped, tau)
    assert np.allclose(out - out[0], true - true[0])


def test_unwrap_residuals_ambiguous():
    tau = 100.0
    with pytest.raises(UnwrapAmbiguous):
        unwrap_residuals(np.array([0.0, 45.0, -10.0, 35.0, -20.0]), tau)


def test_mode_switch_quarter_period_noiseless():
    spec = preview_video_spec(jitter_sigma_ns=0.0, phase_offset_ns=TAU / 4, seed=5)
    preview, video = split_segments(generate(spec), spec)
    jump = mode_switch_check(preview, video, estimate(preview).model)
    assert jump == pytest.approx(TAU / 4, abs=1.0)


def test_mode_switch_far_later_video():
    tau = 33_333_333
    preview = validate_trace(7_000_000 + tau * np.arange(450))
    video = validate_trace(7_000_000 + tau * (10**6 + np.arange(1350)))
    assert abs(mode_switch_check(preview, video, estimate(preview).model)) < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 5e5))
def test_mode_switch_self_consistent(seed, sigma):
    # circular-mean and least-squares phases agree far inside the noise floor
    tr = generate(TraceSpec(TAU, 3e6, 200, sigma, seed=seed)).trace
    assert abs(mode_switch_check(tr, tr, estimate(tr).model)) < 0.1 * sigma / math.sqrt(200) + 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(-(10**12), 10**12))
def test_drift_translation_invariant(seed, c):
    tr = generate(TraceSpec(TAU, 1e6, 400, 2e5, seed=seed)).trace
    a = drift_coefficient(tr, 50, 300).drift_ms_per_min
    b = drift_coefficient(validate_trace(tr.timestamps + c), 50, 300).drift_ms_per_min
    assert math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-9)


def test_eval_protocol_validation():
    assert EvalProtocol().train_sizes == (25, 50, 200)
    assert EvalProtocol().test_size == 1000
    with pytest.raises(ValueError):
        EvalProtocol((0, 5), 10)
