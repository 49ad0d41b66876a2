"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class IvfuncError(Exception):
    exit_code = 1


class ConfigError(IvfuncError, ValueError):
    """Invalid configuration or argument (bandwidth, kernel name, weights...)."""

    exit_code = 2


class DataError(IvfuncError, ValueError):
    """Malformed input data: non-finite increments, bad CSV rows, too few points."""

    exit_code = 3


class NumericError(IvfuncError, ArithmeticError):
    """Quadrature failure, degenerate kernel, NaN in a simulated path."""

    exit_code = 4


class DomainError(NumericError):
    """A functional was evaluated outside its domain (e.g. log of a non-positive value)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
