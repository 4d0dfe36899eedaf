"""Exception types shared across the package."""


class FixedTrackError(Exception):
    """Base class for all fptrack errors."""


class PreconditionError(FixedTrackError, ValueError):
    """An operation was called outside its stated domain of validity."""


class NonConvergenceError(FixedTrackError, RuntimeError):
    """Batch fixed-point iteration hit its iteration cap above tolerance."""

    def __init__(self, message, residual=None, iterations=None, time_index=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.time_index = time_index


class DomainViolationError(FixedTrackError, RuntimeError):
    """An iterate or map output left the declared domain.

    Signals that a self-map declaration is false for the instance at hand.
    """


class LengthMismatchError(FixedTrackError, ValueError):
    """Paired sequences have different lengths."""


class StaleBeyondCapError(FixedTrackError, RuntimeError):
    """A channel schedule exceeded its declared worst-case staleness."""


class ContractionUncertifiedError(FixedTrackError, RuntimeError):
    """Empirical or analytic certification of a contraction/self-map failed."""


class PartitionUnsupportedError(FixedTrackError, ValueError):
    """A network partition does not have the supported chain-of-areas shape."""


class ConfigError(FixedTrackError, ValueError):
    """An experiment configuration document is invalid."""
