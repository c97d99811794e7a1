"""Exception types raised across the package."""


class EmsqueezeError(Exception):
    """Base class for all package errors."""


class SpaceError(EmsqueezeError, ValueError):
    """Invalid Fock space description, unknown label, or mismatched spaces."""


class TruncationError(EmsqueezeError, ValueError):
    """Requested state does not fit in the truncated Fock space."""

    def __init__(self, message, mode=None, tail=None):
        super().__init__(message)
        self.mode = mode
        self.tail = tail


class InvalidStateError(EmsqueezeError, ValueError):
    """State violates normalization, hermiticity or positivity."""


class SpecError(EmsqueezeError, ValueError):
    """Malformed system specification (bad rates, labels, strengths)."""


class RegimeError(EmsqueezeError, ValueError):
    """Parameters fall outside the validated physical regime."""


class UnsupportedTermError(EmsqueezeError, TypeError):
    """A coupling or channel that the Gaussian engine cannot represent."""


class StepSizeError(EmsqueezeError, RuntimeError):
    """Integrator drifted beyond tolerance; a smaller step is needed."""


class ConvergenceError(EmsqueezeError, RuntimeError):
    """Steady state not reached within the configured horizon."""


class NoSteadyStateError(EmsqueezeError, RuntimeError):
    """Drift matrix is not Hurwitz, so no unique Gaussian steady state exists."""


class ConfigError(EmsqueezeError, ValueError):
    """Scenario configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
