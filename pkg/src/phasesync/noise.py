"""Timestamp noise regimes: single Gaussian vs. drop-induced gap clusters.

Gaps are clustered by their integer period count (the same rounding the
estimator uses). Each cluster of ``gap/k`` values is tested for normality with
the Anderson-Darling statistic against a Gaussian of estimated mean and
variance. P-values use the D'Agostino & Stephens (1986) approximation for the
modified statistic ``A2 * (1 + 0.75/n + 2.25/n**2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import log_ndtr

from .errors import TooFewSamples, TooShort
from .estimator import ClusterStats, build_diff_series, solve_clustered_lsq, tau_init
from .model import TimestampTrace

MIN_NORMALITY_SAMPLES = 8
MIN_CLASSIFY_LENGTH = 20
DEFAULT_SIGNIFICANCE = 0.01


class Regime(str, enum.Enum):
    UNIMODAL = "unimodal"
    MULTI_CLUSTER = "multi_cluster"


class NormalityResult(NamedTuple):
    statistic: float
    passed: bool
    p_value: float
    degenerate: bool = False


@dataclass(frozen=True)
class ClusterNormality:
    k: int
    count: int
    tested: bool
    result: NormalityResult | None


@dataclass(frozen=True)
class NoiseClassification:
    regime: Regime
    clusters: list[ClusterStats]
    drop_rate: float
    normality: list[ClusterNormality]
    pooled: NormalityResult
    significance: float


# the upper-tail approximation turns upward past its vertex; p is ~1e-300 there
_AD_TAIL_VERTEX = 5.709 / (2 * 0.0186)


def _ad_p_value(a2_star: float) -> float:
    if a2_star >= _AD_TAIL_VERTEX:
        return 0.0
    if a2_star >= 0.6:
        return math.exp(1.2937 - 5.709 * a2_star + 0.0186 * a2_star**2)
    if a2_star >= 0.34:
        return math.exp(0.9177 - 4.279 * a2_star - 1.38 * a2_star**2)
    if a2_star >= 0.2:
        return 1.0 - math.exp(-8.318 + 42.796 * a2_star - 59.938 * a2_star**2)
    return 1.0 - math.exp(-13.436 + 101.14 * a2_star - 223.73 * a2_star**2)


def normality_check(samples, significance: float = DEFAULT_SIGNIFICANCE) -> NormalityResult:
    """Anderson-Darling test of normality with estimated mean and variance.

    ``statistic`` is the unmodified A^2. Constant samples are reported as
    degenerate and failing instead of raising.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n < MIN_NORMALITY_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_NORMALITY_SAMPLES} samples, got {n}")
    if not 0 < significance < 1:
        raise ValueError("significance must lie in (0, 1)")
    sd = x.std(ddof=1)
    if not sd > 0 or sd <= 1e-12 * max(abs(x.mean()), 1.0):
        return NormalityResult(float("nan"), False, 0.0, True)
    z = (x - x.mean()) / sd
    i = np.arange(1, n + 1)
    a2 = -n - np.sum((2 * i - 1) * (log_ndtr(z) + log_ndtr(-z[::-1]))) / n
    p = _ad_p_value(a2 * (1 + 0.75 / n + 2.25 / n**2))
    p = min(max(p, 0.0), 1.0)
    return NormalityResult(float(a2), bool(p > significance), p)


def classify(trace: TimestampTrace, significance: float = DEFAULT_SIGNIFICANCE) -> NoiseClassification:
    """Split the gaps of a trace into period-count clusters and test each one."""
    if len(trace) < MIN_CLASSIFY_LENGTH:
        raise TooShort(f"classification needs {MIN_CLASSIFY_LENGTH} samples, got {len(trace)}")
    series = build_diff_series(trace, tau_init(trace))
    tau, clusters = solve_clustered_lsq(series)

    normality = []
    for c in clusters:
        members = series.diffs[series.delta_n == c.k] / c.k - tau
        if c.count >= MIN_NORMALITY_SAMPLES:
            normality.append(ClusterNormality(c.k, c.count, True, normality_check(members, significance)))
        else:
            normality.append(ClusterNormality(c.k, c.count, False, None))

    regime = Regime.UNIMODAL if len(clusters) == 1 and clusters[0].k == 1 else Regime.MULTI_CLUSTER
    drop_rate = float(np.mean(series.delta_n > 1))
    return NoiseClassification(
        regime=regime,
        clusters=clusters,
        drop_rate=drop_rate,
        normality=normality,
        pooled=normality_check(series.diffs, significance),
        significance=significance,
    )
