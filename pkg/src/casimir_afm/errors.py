"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
AnalysisError -> 4.
"""


class CasimirAFMError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CasimirAFMError, ValueError):
    """Argument outside an operation's precondition."""


class DomainError(InvalidInputError):
    """Evaluation point outside the function's domain (e.g. d <= 0)."""


class DivergenceError(InvalidInputError):
    """Evaluation at a point where the quantity diverges (e.g. metal at xi = 0)."""


class ConfigError(CasimirAFMError):
    """Malformed or unknown configuration."""


class NumericalError(CasimirAFMError):
    """A numerical procedure failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(NumericalError):
    """Quadrature or series truncation did not converge."""


class FitError(NumericalError):
    """Nonlinear least squares did not converge."""


class AnalysisError(CasimirAFMError):
    """Experimental-data analysis could not proceed (no contact line, bad grids...)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
