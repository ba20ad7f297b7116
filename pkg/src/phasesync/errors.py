"""Exception hierarchy shared by every module in the package."""


class PhaseSyncError(Exception):
    """Base class for all errors raised by phasesync."""


class TraceError(PhaseSyncError, ValueError):
    """A timestamp trace violates its invariants."""


class EmptyTrace(TraceError):
    pass


class NonMonotonic(TraceError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"timestamp at index {index} is earlier than its predecessor")


class DuplicateTimestamp(TraceError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"timestamp at index {index} duplicates its predecessor")


class TooShort(TraceError):
    pass


class NonPositivePeriod(PhaseSyncError, ValueError):
    pass


class LengthMismatch(PhaseSyncError, ValueError):
    pass


class IndexCollision(PhaseSyncError):
    """Two timestamps were assigned the same frame slot."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"timestamps {index - 1} and {index} share one frame slot")


class EstimationError(PhaseSyncError):
    pass


class DegenerateSeed(EstimationError):
    pass


class NoConvergence(EstimationError):
    pass


class InfeasibleBand(EstimationError):
    pass


class TooFewSamples(PhaseSyncError, ValueError):
    pass


class UnwrapAmbiguous(PhaseSyncError):
    pass


class InvalidSpec(PhaseSyncError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MessageLost(PhaseSyncError):
    pass


class NoSamples(PhaseSyncError, ValueError):
    pass


class PeriodMismatch(PhaseSyncError, ValueError):
    pass


class SessionFailed(PhaseSyncError):
    pass


class ParseError(PhaseSyncError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(PhaseSyncError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
