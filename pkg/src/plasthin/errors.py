"""Exception hierarchy shared by every plasthin module."""

from __future__ import annotations


class PlasthinError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PlasthinError, ValueError):
    pass


class ShapeError(PlasthinError, ValueError):
    pass


class ConfigurationError(PlasthinError, ValueError):
    pass


class ConstraintViolationError(PlasthinError, ValueError):
    pass


class UnsupportedGridError(PlasthinError, ValueError):
    pass


class RangeError(PlasthinError, ValueError):
    pass


class AssemblyError(PlasthinError, RuntimeError):
    pass


class PreconditionError(PlasthinError, ValueError):
    pass


class ConvergenceError(PlasthinError, RuntimeError):
    """Raised when the incremental minimization does not converge.

    ``last_residual`` carries the objective decrease of the final sweep.
    """

    def __init__(self, message: str, last_residual: float):
        super().__init__(message)
        self.last_residual = last_residual
