"""Exception hierarchy."""


class TwistOrbitError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(TwistOrbitError, ValueError):
    pass


class InjectivityRadiusError(TwistOrbitError):
    pass


class ZeroDistanceError(TwistOrbitError):
    pass


class EscapeError(TwistOrbitError):
    """A trajectory left the region ``||p|| <= C + margin``."""


class DecompositionError(TwistOrbitError):
    pass


class OutOfRangeError(TwistOrbitError):
    """Inverting ``(q, p) -> (q, Q)`` failed or landed outside the validated region.

    ``indices`` holds the batch positions that failed.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class OutOfDomainError(OutOfRangeError):
    """A sequence pair ``(q_k, q_{k+1})`` is not in the image of its stage."""


class TwistViolationError(TwistOrbitError):
    pass


class ExcludedByHypothesisError(TwistOrbitError):
    pass


class NumericFailureError(TwistOrbitError):
    pass


class CrossValidationError(TwistOrbitError):
    pass


class BoundaryIntersectionError(TwistOrbitError):
    pass


class PreconditionError(TwistOrbitError):
    pass


class ConfigError(TwistOrbitError, ValueError):
    """Configuration validation failure; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
