import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasesync.errors import InfeasibleBand, TooShort
from phasesync.estimator import EstimateOptions, estimate
from phasesync.exact import exact_solve
from phasesync.model import validate_trace
from phasesync.synth import TraceSpec, generate

MS = 1_000_000


def test_noiseless_six_samples():
    tr = validate_trace([2 * MS + i * 10 * MS for i in range(6)])
    e = exact_solve(tr, 8 * MS, 12 * MS)
    assert e.objective == pytest.approx(0, abs=1e-6)
    assert e.model.period_ns == pytest.approx(10 * MS, rel=1e-9)
    assert e.model.phase_ns == pytest.approx(2 * MS, abs=1e-3)


def test_noiseless_with_drop():
    tr = validate_trace([2 * MS + i * 10 * MS for i in (0, 1, 2, 4, 5, 6)])
    e = exact_solve(tr, 8 * MS, 12 * MS)
    assert e.model.period_ns == pytest.approx(10 * MS, rel=1e-9)
    assert e.model.phase_ns == pytest.approx(2 * MS, abs=1e-3)
    assert np.diff(e.assignment.indices).tolist() == [1, 1, 2, 1, 1]


def test_oracle_at_least_as_good_as_estimate():
    tau = 10 * MS
    for seed in range(200):
        tr = generate(TraceSpec(tau, 3 * MS, 8, 0.03 * tau, drop_prob=0.15, seed=seed)).trace
        e = estimate(tr, EstimateOptions(min_samples=4))
        o = exact_solve(tr, 0.8 * tau, 1.25 * tau, grid_steps=2000)
        assert o.objective <= e.objective * (1 + 1e-9) + 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(10**5, 10**8), st.data())
def test_band_constraint_holds(tau, data):
    tau0 = data.draw(st.integers(0, tau - 1))
    noise = data.draw(st.lists(st.floats(-0.1, 0.1), min_size=5, max_size=12))
    ts = np.rint(tau0 + (np.arange(len(noise)) + np.array(noise)) * tau).astype(np.int64)
    e = exact_solve(validate_trace(ts), 0.8 * tau, 1.25 * tau, grid_steps=1000)
    m = e.model
    r = ts - (m.phase_ns + e.assignment.indices * m.period_ns)
    assert np.all(np.abs(r) <= m.period_ns / 2 * (1 + 1e-6))


def test_length_guard():
    with pytest.raises(TooShort):
        exact_solve(validate_trace(np.arange(65) * 10), 8, 12)


def test_bounds_checked():
    tr = validate_trace(np.arange(6) * 10)
    with pytest.raises(ValueError):
        exact_solve(tr, 12, 8)


def test_infeasible_band():
    # spacing 10 cannot sit on any grid with period in [40, 41]: four frames collide per slot
    with pytest.raises(InfeasibleBand):
        exact_solve(validate_trace(np.arange(12) * 10), 40, 41, grid_steps=50)
