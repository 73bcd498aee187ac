"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, everything else just raises.
"""


class MultilapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MultilapError):
    """Invalid configuration: unknown keys, wrong types, out-of-range values."""


class FormatError(MultilapError):
    """Malformed input file (edge list, CSV, image)."""


class NumericalError(MultilapError):
    """Numerical failure: non-convergence, loss of positive definiteness,
    non-finite iterates, degenerate graphs (isolated nodes)."""


class ConvergenceError(NumericalError):
    """Iteration budget exhausted before reaching the requested tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
