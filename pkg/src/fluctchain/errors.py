"""Exception hierarchy shared by all fluctchain modules."""


class FluctchainError(Exception):
    """Base class for all package-specific errors."""


class InvalidPotentialError(FluctchainError):
    """The supplied interaction violates the smoothness/growth requirements."""


class InvalidCoefficientsError(FluctchainError):
    """Taylor coefficients outside the admissible range (e.g. c2 <= 0)."""


class EnvelopeFailureError(FluctchainError):
    """Rejection-sampling envelope stopped dominating the Gibbs density."""


class NumericError(FluctchainError):
    """Quadrature or root-finding failed to converge."""


class BlowUpError(FluctchainError):
    """Chain or field state became non-finite during integration."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class FrameWrapError(FluctchainError):
    """A moving-frame test function support left the periodic box."""


class ResolutionError(FluctchainError):
    """Too few snapshots to resolve a time integral."""


class ConfigError(FluctchainError):
    """Experiment configuration could not be parsed or validated."""
