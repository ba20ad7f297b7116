"""Frame-timestamp phase estimation, drift metrics and multi-camera sync simulation."""

__version__ = "0.1.0"

from .errors import PhaseSyncError
from .model import PhaseModel, TimestampTrace, validate_trace
from .estimator import EstimateOptions, PeriodEstimate, estimate
from .exact import exact_solve
from .noise import Regime, classify, normality_check
from .drift import EvalProtocol, drift_coefficient, mode_switch_check, train_size_sweep
from .synth import TraceSpec, generate, preview_video_spec
from .sim import NetworkModel, SessionConfig, run_session

__all__ = [
    "PhaseSyncError", "PhaseModel", "TimestampTrace", "validate_trace", "EstimateOptions", "PeriodEstimate",
    "estimate", "exact_solve", "Regime", "classify", "normality_check", "EvalProtocol", "drift_coefficient",
    "mode_switch_check", "train_size_sweep", "TraceSpec", "generate", "preview_video_spec", "NetworkModel",
    "SessionConfig", "run_session",
]
