"""Exception hierarchy shared across the package."""


class FedoptLabError(Exception):
    """Base class for all package errors."""


class ConfigError(FedoptLabError):
    """Invalid or missing configuration (CLI exit code 2)."""


class NumericalError(FedoptLabError):
    """Base class for solver and numerical failures (CLI exit code 1)."""


class DivergenceError(NumericalError):
    """An iteration blew up, usually because the stepsize is too large."""

    def __init__(self, message, round_index=None, cost=None):
        super().__init__(message)
        self.round_index = round_index
        self.cost = cost


class NonconvergenceError(NumericalError):
    """An inner solver hit its iteration cap; carries the final residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateProblemError(NumericalError):
    """A problem instance violates a rank or positivity precondition."""


class StepsizeError(NumericalError):
    """A stepsize violates the spectral condition required by the method."""
