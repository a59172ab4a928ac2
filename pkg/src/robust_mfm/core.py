"""Core value types for matrix-valued time series and matrix factor fits.

A series of ``T`` observations ``X_t`` (each ``p1 x p2``) is stored as one
``(T, p1, p2)`` float64 array in C order, i.e. t-major and row-major inside
each matrix. The model is ``X_t = R F_t C' + E_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ValidationError
from .huber import huber_loss

__all__ = [
    "MatrixSeries",
    "FactorFit",
    "SignMatrix",
    "common_components",
    "sign_align",
    "evaluate_objective",
    "residuals",
]


def _frozen(a: NDArray[np.float64]) -> NDArray[np.float64]:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MatrixSeries:
    """``T`` real ``p1 x p2`` matrices stored as a read-only ``(T, p1, p2)`` array."""

    data: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValidationError(f"expected a (T, p1, p2) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("series contains non-finite entries")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def p1(self) -> int:
        return self.data.shape[1]

    @property
    def p2(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def __len__(self) -> int:
        return self.T

    def __getitem__(self, t):
        return self.data[t]

    def transpose(self) -> "MatrixSeries":
        """The series of transposed matrices ``X_t'``."""
        return MatrixSeries(np.swapaxes(self.data, 1, 2))

    def window(self, start: int, stop: int) -> "MatrixSeries":
        return MatrixSeries(self.data[start:stop])


@dataclass(frozen=True)
class FactorFit:
    """Estimated loadings ``R`` (p1 x k1), ``C`` (p2 x k2) and factors ``F`` (T x k1 x k2)."""

    R: NDArray[np.float64]
    C: NDArray[np.float64]
    F: NDArray[np.float64]
    normalized: bool = False
    objective_value: float = float("nan")
    iterations: int = 0
    converged: bool = False
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64)
        C = np.asarray(self.C, dtype=np.float64)
        F = np.asarray(self.F, dtype=np.float64)
        if F.ndim == 2:
            F = F[None]
        if R.ndim != 2 or C.ndim != 2 or F.ndim != 3:
            raise ValidationError("invalid fit: R, C must be 2-D and F 3-D")
        if F.shape[1:] != (R.shape[1], C.shape[1]):
            raise ValidationError(
                f"invalid fit: factor shape {F.shape[1:]} does not match loadings "
                f"({R.shape[1]}, {C.shape[1]})"
            )
        if R.shape[1] > R.shape[0] or C.shape[1] > C.shape[0]:
            raise ValidationError("invalid fit: more factors than rows/columns")
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "F", _frozen(F))

    @property
    def k1(self) -> int:
        return self.R.shape[1]

    @property
    def k2(self) -> int:
        return self.C.shape[1]

    @property
    def T(self) -> int:
        return self.F.shape[0]

    def common_components(self) -> NDArray[np.float64]:
        return common_components(self)

    def factor_moments(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``(1/T) sum F_t F_t'`` and ``(1/T) sum F_t' F_t``."""
        F = self.F
        return (
            np.einsum("tab,tcb->ac", F, F) / self.T,
            np.einsum("tab,tac->bc", F, F) / self.T,
        )

    def identification_error(self) -> float:
        """Largest violation of the identification constraints (0 when exact)."""
        p1, p2 = self.R.shape[0], self.C.shape[0]
        s1, s2 = self.factor_moments()
        errs = [
            np.max(np.abs(self.R.T @ self.R / p1 - np.eye(self.k1))),
            np.max(np.abs(self.C.T @ self.C / p2 - np.eye(self.k2))),
            np.max(np.abs(s1 - np.diag(np.diag(s1)))),
            np.max(np.abs(s2 - np.diag(np.diag(s2)))),
        ]
        return float(max(errs))

    def replace(self, **changes) -> "FactorFit":
        kw = dict(
            R=self.R, C=self.C, F=self.F, normalized=self.normalized,
            objective_value=self.objective_value, iterations=self.iterations,
            converged=self.converged, diagnostics=dict(self.diagnostics),
        )
        kw.update(changes)
        return FactorFit(**kw)


@dataclass(frozen=True)
class SignMatrix:
    """Diagonal matrix with +1/-1 entries, stored as its diagonal."""

    d: NDArray[np.float64]

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=np.float64).ravel()
        if not np.all((d == 1.0) | (d == -1.0)):
            raise ValidationError("sign matrix entries must be exactly +1 or -1")
        object.__setattr__(self, "d", _frozen(d))

    def matrix(self) -> NDArray[np.float64]:
        return np.diag(self.d)

    def __len__(self) -> int:
        return self.d.size


def common_components(fit: FactorFit) -> NDArray[np.float64]:
    """``S_t = R F_t C'`` for every ``t``; returns a ``(T, p1, p2)`` array."""
    R, C, F = fit.R, fit.C, fit.F
    if F.shape[1] != R.shape[1] or F.shape[2] != C.shape[1]:
        raise ValidationError("invalid fit: dimension mismatch between R, F_t and C")
    return np.einsum("ia,tab,jb->tij", R, F, C, optimize=True)


def sign_align(A: ArrayLike) -> SignMatrix:
    """Signs of the diagonal of a square matrix, with ``sgn(0) = +1``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"sign_align needs a square matrix, got shape {A.shape}")
    return SignMatrix(np.where(np.diag(A) >= 0, 1.0, -1.0))


def _check_compatible(series: MatrixSeries, fit: FactorFit) -> None:
    if (fit.T, fit.R.shape[0], fit.C.shape[0]) != series.shape:
        raise ValidationError(
            f"fit dimensions (T={fit.T}, p1={fit.R.shape[0]}, p2={fit.C.shape[0]}) "
            f"do not match series {series.shape}"
        )


def residuals(series: MatrixSeries, fit: FactorFit) -> NDArray[np.float64]:
    """``X_t - R F_t C'`` as a ``(T, p1, p2)`` array."""
    _check_compatible(series, fit)
    return series.data - common_components(fit)


def evaluate_objective(series: MatrixSeries, fit: FactorFit, tau: float) -> float:
    """Mean Huber loss of the residuals over all ``(t, i, j)``."""
    if not np.all(np.isfinite(fit.F)) or not np.all(np.isfinite(fit.R)) or not np.all(np.isfinite(fit.C)):
        raise ValidationError("fit contains non-finite entries")
    e = residuals(series, fit)
    return float(np.mean(huber_loss(e, tau)))
