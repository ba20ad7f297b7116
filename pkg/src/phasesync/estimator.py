"""Period and phase estimation from camera timestamps.

The fast path never solves the mixed-integer problem directly. It seeds the
period with the smallest inter-frame gap, rounds every gap to an integer
number of periods, and solves one small least-squares problem per gap size
("cluster"). The phase follows from a circular mean of timestamp residues.
An optional refinement re-assigns absolute frame indices with the fitted
period and re-solves the joint linear problem until the indices settle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateSeed, EmptyTrace, IndexCollision, NoConvergence, TooShort
from .model import (
    FrameIndexAssignment,
    PhaseModel,
    TimestampTrace,
    assign_indices,
    frame_indices,
    normalize_phase,
    objective,
)

WEIGHTINGS = ("count", "inverse_variance")
MIN_INVERSE_VARIANCE_MEMBERS = 5
ROBUST_SEED_PERCENTILE = 5.0


@dataclass(frozen=True, eq=False)
class DiffSeries:
    """Consecutive gaps ``diffs`` and their integer period counts ``delta_n``."""

    diffs: np.ndarray
    delta_n: np.ndarray

    def __post_init__(self):
        diffs = np.array(self.diffs, dtype=np.float64)
        delta_n = np.array(self.delta_n, dtype=np.int64)
        if diffs.shape != delta_n.shape or diffs.ndim != 1:
            raise ValueError("diffs and delta_n must be 1-d and of equal length")
        if np.any(diffs <= 0):
            raise ValueError("all diffs must be positive")
        if np.any(delta_n < 1):
            raise ValueError("all delta_n must be >= 1")
        diffs.setflags(write=False)
        delta_n.setflags(write=False)
        object.__setattr__(self, "diffs", diffs)
        object.__setattr__(self, "delta_n", delta_n)

    def __len__(self):
        return len(self.diffs)


@dataclass(frozen=True)
class ClusterStats:
    k: int
    count: int
    tau_hat_ns: float
    sigma_hat_ns: float


@dataclass(frozen=True)
class EstimateOptions:
    min_samples: int = 10
    refine: bool = True
    max_iter: int = 10
    weighting: str = "count"
    robust_seed: bool = False

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True, eq=False)
class PeriodEstimate:
    model: PhaseModel
    clusters: list
    tau_init_ns: float
    objective: float
    refined: bool
    assignment: FrameIndexAssignment | None = None
    objective_history: tuple = field(default_factory=tuple)

    @property
    def iterations(self) -> int:
        return max(len(self.objective_history) - 1, 0)


def tau_init(trace: TimestampTrace, robust: bool = False) -> float:
    """Period seed: the smallest consecutive gap.

    With ``robust=True`` the 5th-percentile gap is used instead, so a single
    corrupted near-zero gap cannot poison the seed.
    """
    if len(trace) < 2:
        raise EmptyTrace("need at least 2 timestamps")
    d = trace.diffs()
    if robust:
        return float(np.percentile(d, ROBUST_SEED_PERCENTILE, method="lower"))
    return float(d.min())


def build_diff_series(trace: TimestampTrace, tau_seed: float) -> DiffSeries:
    """Gaps between consecutive timestamps with their rounded period counts.

    The count of each gap is ``floor(gap / tau_seed + 0.5)``, which is the
    nearest-slot rule applied to the gap itself so that a small seed error does
    not accumulate along the trace.
    """
    if not tau_seed > 0:
        raise DegenerateSeed(f"seed period must be positive, got {tau_seed!r}")
    d = trace.diffs()
    dn = frame_indices(d, tau_seed)
    zero = np.flatnonzero(dn < 1)
    if zero.size:
        raise DegenerateSeed(
            f"gap {int(zero[0]) + 1} ({int(d[zero[0]])} ns) rounds to zero periods of {tau_seed:.6g} ns"
        )
    return DiffSeries(d.astype(np.float64), dn)


def cluster_stats(series: DiffSeries) -> list[ClusterStats]:
    """Per gap-count statistics, ordered by ``k``."""
    out = []
    for k in np.unique(series.delta_n):
        members = series.diffs[series.delta_n == k]
        per_period = members / k
        sigma = float(np.std(per_period, ddof=1)) if members.size > 1 else 0.0
        out.append(ClusterStats(int(k), int(members.size), float(members.sum() / (members.size * k)), sigma))
    return out


def _cluster_weights(clusters, weighting):
    if weighting == "inverse_variance" and all(
        c.count >= MIN_INVERSE_VARIANCE_MEMBERS and c.sigma_hat_ns > 0 for c in clusters
    ):
        # variance of a cluster mean of gap/k is sigma_k^2 / n_k
        return np.array([c.count / c.sigma_hat_ns**2 for c in clusters])
    return np.array([float(c.count * c.k * c.k) for c in clusters])


def solve_clustered_lsq(series: DiffSeries, weighting: str = "count"):
    """Period from per-cluster least squares, combined as a weighted mean.

    With the default ``count`` weights ``n_k * k**2`` the result equals the
    joint closed form ``sum(dN * dt) / sum(dN**2)``.

    Returns:
        ``(tau, clusters)``.
    """
    if len(series) == 0:
        raise EmptyTrace("empty diff series")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    clusters = cluster_stats(series)
    w = _cluster_weights(clusters, weighting)
    tau_k = np.array([c.tau_hat_ns for c in clusters])
    return float(np.dot(w, tau_k) / w.sum()), clusters


def estimate_phase(trace: TimestampTrace, tau: float) -> float:
    """Circular mean of the timestamp residues modulo ``tau``, in ``[0, tau)``."""
    t = trace.timestamps
    base = int(t[0])
    rel = (t - base).astype(np.float64)
    angles = 2.0 * np.pi * (np.mod(rel, tau) / tau)
    s, c = np.sin(angles).sum(), np.cos(angles).sum()
    mean = math.atan2(s, c) / (2.0 * np.pi) * tau if (s or c) else 0.0
    return normalize_phase(float(Fraction(base) % Fraction(tau)) + mean, tau)


def exact_line_fit(indices, timestamps):
    """Exact least-squares line ``t = a + b*N`` over integer data.

    Returns ``(a, b, sse)`` as :class:`fractions.Fraction`; the normal
    equations are solved in rational arithmetic so identical inputs always give
    bit-identical floats and on-grid data is fitted exactly.
    """
    n_arr = np.asarray(indices, dtype=np.int64)
    t_arr = np.asarray(timestamps, dtype=np.int64)
    n0, t0 = int(n_arr[0]), int(t_arr[0])
    xs = (n_arr - n0).tolist()
    ys = (t_arr - t0).tolist()
    m = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    syy = sum(y * y for y in ys)
    det = m * sxx - sx * sx
    if det == 0:
        raise NoConvergence("all frames share one index; the line is undetermined")
    b = Fraction(m * sxy - sx * sy, det)
    a_rel = Fraction(sy * sxx - sx * sxy, det)
    sse = syy - a_rel * sy - b * sxy
    return a_rel + t0 - b * n0, b, sse


def _sigma_from_sse(sse, n):
    return math.sqrt(max(float(sse), 0.0) / (n - 2)) if n > 2 else 0.0


def _refine(trace, model, max_iter):
    idx = assign_indices(trace, model)
    history = [objective(trace, model, idx.indices)]
    n = len(trace)
    for _ in range(max_iter):
        a, b, sse = exact_line_fit(idx.indices, trace.timestamps)
        if b <= 0:
            raise NoConvergence("refinement produced a nonpositive period")
        history.append(float(sse))
        model = PhaseModel(float(a % b), float(b), _sigma_from_sse(sse, n))
        new_idx = assign_indices(trace, model)
        if np.array_equal(new_idx.indices, idx.indices):
            return model, new_idx, history
        idx = new_idx
    raise NoConvergence(f"frame index assignment still changing after {max_iter} iterations")


def estimate(trace: TimestampTrace, options: EstimateOptions | None = None) -> PeriodEstimate:
    """Fit ``(phase, period)`` to a trace.

    Runs seed -> gap clustering -> clustered least squares -> circular-mean
    phase, then (by default) the refinement fixed point.

    Raises:
        TooShort: fewer than ``options.min_samples`` timestamps.
        DegenerateSeed: some gap rounds to zero periods.
        NoConvergence: refinement did not settle, the fitted grid puts two
            frames in one slot, or the period left the
            ``(tau_init/2, 2*tau_init)`` sanity band.
    """
    opts = options or EstimateOptions()
    if len(trace) < opts.min_samples:
        raise TooShort(f"trace has {len(trace)} samples, need {opts.min_samples}")
    seed = tau_init(trace, robust=opts.robust_seed)
    series = build_diff_series(trace, seed)
    tau, clusters = solve_clustered_lsq(series, opts.weighting)
    phase = estimate_phase(trace, tau)
    model = PhaseModel(phase, tau)

    try:
        if opts.refine:
            model, idx, history = _refine(trace, model, opts.max_iter)
        else:
            idx = assign_indices(trace, model)
            obj = objective(trace, model, idx.indices)
            model = PhaseModel(phase, tau, _sigma_from_sse(obj, len(trace)))
            history = [obj]
    except IndexCollision as exc:
        # the gap clustering picked wrong counts (typically jitter above ~0.04 tau
        # pulling the min-gap seed down), so the grid no longer separates frames
        raise NoConvergence(f"fitted grid cannot separate frames: {exc}") from exc

    if not 0.5 * seed < model.period_ns < 2.0 * seed:
        raise NoConvergence(f"period {model.period_ns:.6g} ns left the sanity band around seed {seed:.6g} ns")
    return PeriodEstimate(
        model=model,
        clusters=clusters,
        tau_init_ns=seed,
        objective=history[-1],
        refined=opts.refine,
        assignment=idx,
        objective_history=tuple(history),
    )
