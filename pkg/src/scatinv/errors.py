"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: config 1, precision 2,
convergence 3, inadmissible parameters 4.
"""


class ScatinvError(Exception):
    """Base class for all package errors."""


class ConfigError(ScatinvError):
    """Malformed or inconsistent configuration input."""

    exit_code = 1


class PrecisionError(ScatinvError):
    """Working precision exhausted before the requested accuracy was met."""

    exit_code = 2

    def __init__(self, message, digits_estimate=None):
        super().__init__(message)
        self.digits_estimate = digits_estimate


class ConvergenceError(ScatinvError):
    """An iteration, quadrature or fit failed to converge."""

    exit_code = 3


class AsymptoticBreakdownError(ConvergenceError):
    """A divergent asymptotic series broke down before reaching tolerance."""


class DomainError(ScatinvError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 4


class InadmissibleParameterError(DomainError):
    """Parameters violate an admissibility condition of a transform."""
