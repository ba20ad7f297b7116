import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasesync.errors import MessageLost, NoSamples, PeriodMismatch, SessionFailed
from phasesync.estimator import estimate
from phasesync.model import PhaseModel, validate_trace
from phasesync.rng import SplitMix64
from phasesync.sim import (
    CameraParams,
    NetworkModel,
    OffsetSample,
    SessionConfig,
    SimDevice,
    apply_alignment,
    exchange_round,
    min_filter_offset,
    plan_alignment,
    run_session,
    session_for_seed,
)

MS = 1_000_000
TAU = 33 * MS


def device(offset=0.0, phase=0.0, jitter=0.0):
    return SimDevice("d", offset, CameraParams(TAU, phase, jitter))


def test_exchange_zero_latency():
    s = exchange_round(device(5 * MS), NetworkModel(0, 0), send_time_ns=1e9)
    assert s.offset_ns == 5 * MS
    assert s.rtt_ns == 0


def test_exchange_symmetric_latency():
    s = exchange_round(device(-7 * MS), NetworkModel(3 * MS, 0), send_time_ns=1e9)
    assert s.offset_ns == -7 * MS
    assert s.rtt_ns == 6 * MS


def test_exchange_asymmetry_bias():
    a = 2 * MS
    s = exchange_round(device(4 * MS), NetworkModel(3 * MS, 0, asymmetry_ns=a), send_time_ns=1e9)
    assert s.offset_ns - 4 * MS == pytest.approx(-a / 2)


def test_exchange_loss():
    with pytest.raises(MessageLost):
        exchange_round(device(), NetworkModel(1, 0, loss_prob=0.999999), rng=SplitMix64(1))


def test_min_filter_examples():
    samples = [OffsetSample(0, o + r / 2, o + r / 2, r) for r, o in [(10, 3), (4, 5), (7, 1)]]
    assert [s.rtt_ns for s in samples] == [10, 4, 7]
    assert min_filter_offset(samples) == 5
    assert min_filter_offset(samples[:1]) == 3
    with pytest.raises(NoSamples):
        min_filter_offset([])


def test_min_filter_beats_mean():
    # target on a jittered symmetric network
    theta = 12.5 * MS
    wins = 0
    for seed in range(100):
        net = NetworkModel(2 * MS, 1 * MS, seed=seed)
        rng = net.stream()
        samples = [exchange_round(device(theta), net, send_time_ns=1e9 + i * 1e7, rng=rng) for i in range(100)]
        mean = np.mean([s.offset_ns for s in samples])
        wins += abs(min_filter_offset(samples) - theta) <= abs(mean - theta)
    assert wins >= 90


def test_min_filter_exact_on_clean_minimum():
    clean = OffsetSample(0, 2 + 9, 2 + 9, 4)  # rtt 4 = 2 * base latency, offset 9
    noisy = [OffsetSample(0, 5 + 9, 5 + 9, 7), OffsetSample(0, 4 + 9, 4 + 9, 9)]
    assert min_filter_offset(noisy + [clean]) == 9


def test_plan_alignment_examples():
    assert plan_alignment({"a": PhaseModel(2 * MS, TAU)}, 2 * MS)["a"] == 0
    assert plan_alignment({"a": PhaseModel(10 * MS, TAU)}, 2 * MS)["a"] == 25 * MS
    plan = plan_alignment({"a": PhaseModel(4 * MS, TAU), "b": PhaseModel(30 * MS, TAU)}, 4 * MS)
    assert plan["a"] == 0 and plan["b"] == 7 * MS


def test_plan_alignment_period_mismatch():
    with pytest.raises(PeriodMismatch):
        plan_alignment({"a": PhaseModel(0, TAU), "b": PhaseModel(0, TAU * 1.01)}, 0)


def test_apply_alignment_zero_is_identity():
    d = device(phase=3 * MS)
    assert apply_alignment(d, 0.0) is d


def test_apply_alignment_half_period():
    d = device(phase=3 * MS)
    before = d.camera.capture_times(1e9, 20)
    after = apply_alignment(d, TAU / 2, at_local_ns=before[5]).camera.capture_times(1e9, 20)
    assert np.array_equal(after[:5], before[:5])
    assert np.allclose(after[6:], before[6:] + TAU / 2)
    with pytest.raises(ValueError):
        apply_alignment(d, TAU)


def test_alignment_round_trip_through_estimator():
    d = device(phase=3 * MS)
    target = 20 * MS
    delta = plan_alignment({"d": PhaseModel(3 * MS, TAU)}, target)["d"]
    shifted = apply_alignment(d, delta, at_local_ns=0.0)
    ts = validate_trace(np.rint(shifted.camera.capture_times(1e9, 60)).astype(np.int64))
    assert estimate(ts).model.phase_ns == pytest.approx(target, abs=1.0)


def test_alignment_idempotent():
    d = device(phase=3 * MS)
    delta = plan_alignment({"d": PhaseModel(3 * MS, TAU)}, 11 * MS)["d"]
    shifted = apply_alignment(d, delta)
    ts = validate_trace(np.rint(shifted.camera.capture_times(1e9, 60)).astype(np.int64))
    again = plan_alignment({"d": estimate(ts).model}, 11 * MS)["d"]
    assert min(again, TAU - again) < 1.0


def noiseless_config(**kw):
    base = dict(period_ns=TAU, camera_jitter_ns=0.0)
    base.update(kw)
    return SessionConfig(**base)


@pytest.mark.parametrize("n_devices", [2, 4])
def test_session_noiseless_zero_skew(n_devices):
    cfg = noiseless_config(n_devices=n_devices)
    for seed in range(10):
        rep = run_session(*session_for_seed(cfg, NetworkModel(2 * MS, 0), seed))
        assert rep.max_skew_ns == 0
        assert all(e == 0 for e in rep.offset_errors_ns.values())


def test_session_default_regime_monte_carlo():
    cfg = SessionConfig(period_ns=1e9 / 30)
    ok = sum(
        run_session(*session_for_seed(cfg, NetworkModel(2 * MS, 1 * MS), s)).max_skew_ns <= 250_000
        for s in range(100)
    )
    assert ok >= 95


def test_session_five_devices_pairs():
    tau = 1e9 / 30
    cfg = SessionConfig(period_ns=tau, n_devices=5)
    rep = run_session(*session_for_seed(cfg, NetworkModel(), 1))
    assert len(rep.pairwise_skews) == 10
    assert all(0 <= p.skew_ns <= tau / 2 for p in rep.pairwise_skews)


def test_session_deterministic():
    cfg = SessionConfig(period_ns=1e9 / 30)
    a = run_session(*session_for_seed(cfg, NetworkModel(), 8))
    b = run_session(*session_for_seed(cfg, NetworkModel(), 8))
    assert a == b


def test_session_fails_on_lossy_network():
    cfg = SessionConfig(period_ns=1e9 / 30, max_retries=1)
    with pytest.raises(SessionFailed):
        run_session(*session_for_seed(cfg, NetworkModel(loss_prob=0.9), 0))


def test_session_skew_grows_with_asymmetry():
    cfg = SessionConfig(period_ns=1e9 / 30, camera_jitter_ns=0.0)
    rep = run_session(*session_for_seed(cfg, NetworkModel(2 * MS, 0, asymmetry_ns=1 * MS), 0))
    assert rep.offset_errors_ns["dev1"] == pytest.approx(-0.5 * MS)
    assert rep.max_skew_ns == pytest.approx(0.5 * MS, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_skews_wrapped_into_half_period(seed, n):
    tau = 1e9 / 30
    cfg = SessionConfig(period_ns=tau, n_devices=n, exposure_step_ns=1e5)
    rep = run_session(*session_for_seed(cfg, NetworkModel(), seed))
    assert len(rep.pairwise_skews) == math.comb(n, 2)
    assert all(0 <= p.skew_ns <= tau / 2 for p in rep.pairwise_skews)
