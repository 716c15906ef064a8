"""Exception types shared across the package."""


class AoiqError(Exception):
    """Base class for package-specific errors."""


class DomainError(AoiqError):
    """Argument lies outside the valid domain of a transform or MGF."""


class QuadratureError(AoiqError):
    """Numerical integration could not reach the requested tolerance."""


class DegenerateError(AoiqError):
    """A quantity conditioned on preemption was requested, but preemption
    is impossible under the given configuration."""


class PrecisionError(AoiqError):
    """Richardson extrapolation of a derivative failed to converge."""


class ConfigMismatchError(AoiqError):
    """Replication summaries to be merged come from different system
    configurations."""


class DistSpecError(AoiqError):
    """A distribution spec string could not be parsed."""
