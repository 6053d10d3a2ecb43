"""Exception types shared across the package."""


class DahError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(DahError, ValueError):
    """A distribution or model parameter is outside its domain."""

    exit_code = 4


class SupportError(DahError, ValueError):
    """Data fall outside the support of a law.

    ``indices`` holds the flat positions of the offending observations.
    """

    exit_code = 3

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class DataError(DahError, ValueError):
    """Input records violate a structural invariant."""

    exit_code = 3

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = tuple(ids)


class ConfigError(DahError, ValueError):
    exit_code = 2


class FitError(DahError, RuntimeError):
    """Optimisation failed; ``best`` carries the best-so-far result if any."""

    exit_code = 4

    def __init__(self, message, best=None, component=None):
        super().__init__(message)
        self.best = best
        self.component = component


class CalibrationError(DahError, RuntimeError):
    """The target median difference is not attained on the coefficient grid."""

    exit_code = 4

    def __init__(self, message, ladder=None):
        super().__init__(message)
        self.ladder = ladder


class TargetUnattainedError(DahError, RuntimeError):
    exit_code = 4

    def __init__(self, message, max_power=None):
        super().__init__(message)
        self.max_power = max_power
