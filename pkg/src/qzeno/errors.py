"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class QZenoError(Exception):
    exit_code = 1


class ParameterError(QZenoError, ValueError):
    """Invalid physical or numerical parameter."""

    exit_code = 3


class GateError(QZenoError):
    """A regime-restricted path was asked to run outside its regime."""

    exit_code = 4


class QuadratureBudgetError(QZenoError):
    """Requested tolerance not reached within the subdivision budget."""

    exit_code = 5


class TruncationError(QZenoError):
    """Fock truncation too small for the requested state or dynamics."""

    exit_code = 6

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class IntegrationError(QZenoError):
    """The adaptive integrator failed (typically step-size underflow)."""

    exit_code = 1

    def __init__(self, message, t_reached=None):
        super().__init__(message)
        self.t_reached = t_reached


class SpectralOverlapError(QZenoError):
    exit_code = 5


class ConfigParseError(QZenoError):
    """Config file unreadable or not a structured document."""

    exit_code = 2


class ConfigValidationError(QZenoError, ValueError):
    exit_code = 3


class OutputError(QZenoError):
    exit_code = 7
