"""Brute-force solver for the mixed-integer timestamp fit on short traces.

For every period on a dense grid the phase that minimizes the wrapped squared
misfit is found exactly (circular least squares over all ``n`` cut points of
the sorted residues). That phase fixes the frame indices; each distinct index
pattern is then refitted jointly in ``(phase, period)`` by ordinary least
squares and the best band-feasible pattern wins. A bounded scalar search over
the best grid cell catches patterns that live between grid points.

This is a desk-scale reference used to check :func:`phasesync.estimator.estimate`;
it is deliberately built on different numerics (float lstsq, no seeding).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleBand, TooShort
from .estimator import PeriodEstimate
from .model import FrameIndexAssignment, PhaseModel, TimestampTrace, normalize_phase

MAX_EXACT_LENGTH = 64
DEFAULT_GRID_STEPS = 100_000
_CHUNK = 4096
_BAND_SLACK = 1e-9


def _circular_fit(x, taus):
    """Best phase and its wrapped SSE for each period in ``taus``.

    ``x`` has shape (n,), ``taus`` shape (G,). Returns phases (G,) and sse (G,).
    """
    n = x.size
    tau = taus[:, None]
    r = np.sort(np.mod(x[None, :], tau), axis=1)
    s = r.sum(axis=1)
    ss = (r * r).sum(axis=1)
    # cut j lifts the j smallest residues by one period
    j = np.arange(n)[None, :]
    head = np.concatenate([np.zeros((r.shape[0], 1)), np.cumsum(r, axis=1)[:, :-1]], axis=1)
    total = s[:, None] + j * tau
    sse = ss[:, None] + 2.0 * tau * head + j * tau * tau - total * total / n
    best = np.argmin(sse, axis=1)
    rows = np.arange(r.shape[0])
    return total[rows, best] / n, sse[rows, best]


def _indices_for(x, taus, phases):
    return np.floor((x[None, :] - phases[:, None]) / taus[:, None] + 0.5).astype(np.int64)


def _joint_fit(x, n_idx):
    a_mat = np.column_stack([np.ones_like(x), n_idx.astype(np.float64)])
    (a, b), *_ = np.linalg.lstsq(a_mat, x, rcond=None)
    r = x - a - b * n_idx
    return float(a), float(b), float(r @ r), r


def exact_solve(trace: TimestampTrace, tau_lo: float, tau_hi: float, grid_steps: int = DEFAULT_GRID_STEPS) -> PeriodEstimate:
    """Global least-squares fit of ``(phase, period, N)`` with the period in ``[tau_lo, tau_hi]``.

    Raises:
        TooShort: trace longer than 64 samples (or shorter than 3).
        InfeasibleBand: no candidate keeps every sample within half a period
            of its slot.
    """
    if len(trace) > MAX_EXACT_LENGTH:
        raise TooShort(f"exact_solve is limited to {MAX_EXACT_LENGTH} samples, got {len(trace)}")
    if len(trace) < 3:
        raise TooShort("exact_solve needs at least 3 samples")
    if not 0 < tau_lo < tau_hi:
        raise ValueError("need 0 < tau_lo < tau_hi")
    if grid_steps < 1:
        raise ValueError("grid_steps must be positive")

    t0 = int(trace.timestamps[0])
    x = (trace.timestamps - t0).astype(np.float64)
    step = (tau_hi - tau_lo) / grid_steps
    grid = tau_lo + step * np.arange(grid_steps + 1)

    patterns = {}  # normalized index pattern -> first grid index
    best_profile = (np.inf, 0)
    for start in range(0, grid.size, _CHUNK):
        taus = grid[start:start + _CHUNK]
        phases, sse = _circular_fit(x, taus)
        k = int(np.argmin(sse))
        if sse[k] < best_profile[0]:
            best_profile = (float(sse[k]), start + k)
        idx = _indices_for(x, taus, phases)
        idx -= idx[:, :1]
        uniq, first = np.unique(idx, axis=0, return_index=True)
        for row, g in zip(uniq, first):
            patterns.setdefault(row.tobytes(), (start + int(g), row))

    g_best = best_profile[1]
    lo, hi = max(tau_lo, grid[g_best] - step), min(tau_hi, grid[g_best] + step)
    if hi > lo:
        res = minimize_scalar(
            lambda tau: float(_circular_fit(x, np.array([tau]))[1][0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": step * 1e-6},
        )
        tau_p = np.array([res.x])
        ph, _ = _circular_fit(x, tau_p)
        row = _indices_for(x, tau_p, ph)[0]
        row -= row[0]
        patterns.setdefault(row.tobytes(), (grid.size, row))

    best = None
    for g, row in sorted(patterns.values(), key=lambda p: p[0]):
        if np.any(np.diff(row) < 1):
            continue
        a, b, sse, r = _joint_fit(x, row)
        if not b > 0 or np.any(np.abs(r) > b / 2 * (1 + _BAND_SLACK)):
            continue
        if best is None or sse < best[0]:
            best = (sse, a, b, row, g)
    if best is None:
        raise InfeasibleBand(f"no band-feasible assignment for periods in [{tau_lo}, {tau_hi}]")

    sse, a, b, row, g = best
    phase = normalize_phase(float(Fraction(t0) % Fraction(b)) + a, b)
    sigma = (sse / (len(trace) - 2)) ** 0.5 if len(trace) > 2 else 0.0
    model = PhaseModel(phase, b, sigma)
    abs_idx = np.floor((trace.timestamps - phase) / b + 0.5).astype(np.int64)
    return PeriodEstimate(
        model=model,
        clusters=[],
        tau_init_ns=float(grid[min(g, grid.size - 1)]),
        objective=sse,
        refined=False,
        assignment=FrameIndexAssignment(abs_idx, b),
        objective_history=(sse,),
    )
