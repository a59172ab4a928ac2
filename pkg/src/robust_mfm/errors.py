"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class MFMError(Exception):
    """Base class for every error raised by robust_mfm."""

    exit_code = 1


class ValidationError(MFMError, ValueError):
    """Invalid argument, malformed input data or a broken precondition."""

    exit_code = 2


class NumericalError(MFMError, ArithmeticError):
    """A computation produced non-finite values or could not be carried out."""

    exit_code = 3

    def __init__(self, message: str, *, sweep: int | None = None) -> None:
        super().__init__(message)
        self.sweep = sweep


class RankDeficiencyError(NumericalError):
    """Loadings or factor moments collapsed to (numerically) lower rank."""


class SingularCovarianceError(NumericalError):
    """A plug-in covariance matrix is not invertible / not positive definite."""


class NonConvergenceError(MFMError):
    """Raised by the CLI when an iterative fit hit its iteration cap."""

    exit_code = 4
