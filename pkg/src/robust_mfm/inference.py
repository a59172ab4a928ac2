"""Plug-in sandwich covariances and confidence intervals for loading rows/columns.

For row ``i`` with residuals ``e_tj = x_tij - r_i' F_t c_j`` and design
vectors ``z_tj = F_t c_j``::

    Phi_i   = 1/(T p2) sum_tj 1{|e_tj| <= tau} z_tj z_tj'
    Sigma_i = 1/(T p2) sum_tj min(e_tj^2, tau^2) z_tj z_tj'

and the asymptotic covariance of ``r_i`` is ``Phi^-1 Sigma Phi^-1 / (T p2)``.
Columns are the transposed analogue.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from .core import FactorFit, MatrixSeries, SignMatrix, residuals, sign_align
from .errors import SingularCovarianceError, ValidationError
from .ihr import col_design, row_design

__all__ = [
    "HUBER_EFFICIENCY_C",
    "MAD_SCALE",
    "InferenceReport",
    "LoadingRecord",
    "select_tau",
    "row_covariance",
    "col_covariance",
    "all_row_covariances",
    "all_col_covariances",
    "inv_sqrt_psd",
    "standardized_row_stat",
    "standardized_col_stat",
    "loading_confidence_interval",
    "aspect_ratio",
    "infer",
]

logger = logging.getLogger(__name__)

HUBER_EFFICIENCY_C = 1.345
MAD_SCALE = 1.483
DEGENERATE_TAU = 1e-6
COND_LIMIT = 1e12
EIG_FLOOR = 1e-12


def select_tau(series: MatrixSeries, prelim: FactorFit) -> float:
    """``tau = 1.345 * 1.483 * median |e|`` from the residuals of a preliminary fit."""
    e = residuals(series, prelim)
    med = float(np.median(np.abs(e)))
    if med == 0.0:
        logger.warning("all preliminary residuals are zero (degenerate data); tau set to %g",
                       DEGENERATE_TAU)
        return DEGENERATE_TAU
    return HUBER_EFFICIENCY_C * MAD_SCALE * med


def _check_tau(tau: float) -> None:
    if not (isinstance(tau, (int, float, np.floating)) and math.isfinite(tau) and tau > 0):
        raise ValidationError(f"tau must be a positive finite number, got {tau!r}")


def _sandwich_parts(e: NDArray[np.float64], Z: NDArray[np.float64], tau: float):
    """Batched ``Phi`` and ``Sigma`` for residual rows ``e`` (m, n) sharing design ``Z`` (n, d)."""
    n = Z.shape[0]
    ind = (np.abs(e) <= tau).astype(np.float64)
    g2 = np.minimum(e * e, tau * tau)
    ZZ = (Z[:, :, None] * Z[:, None, :]).reshape(n, -1)
    d = Z.shape[1]
    Phi = (ind @ ZZ).reshape(-1, d, d) / n
    Sig = (g2 @ ZZ).reshape(-1, d, d) / n
    # exact symmetry
    Phi = 0.5 * (Phi + np.swapaxes(Phi, -1, -2))
    Sig = 0.5 * (Sig + np.swapaxes(Sig, -1, -2))
    return Phi, Sig


def _check_invertible(M: NDArray[np.float64], what: str) -> None:
    w = np.linalg.eigvalsh(M)
    top = float(np.max(np.abs(w)))
    if top == 0.0 or float(np.min(w)) <= top / COND_LIMIT:
        cond = math.inf if top == 0.0 or w.min() <= 0 else top / float(w.min())
        raise SingularCovarianceError(
            f"{what} is singular (condition number {cond:.3g}); consider a larger tau")


def _row_inputs(series: MatrixSeries, fit: FactorFit):
    T, p1, p2 = series.shape
    e = residuals(series, fit).transpose(1, 0, 2).reshape(p1, T * p2)
    return e, row_design(fit.F, fit.C)


def _col_inputs(series: MatrixSeries, fit: FactorFit):
    T, p1, p2 = series.shape
    e = residuals(series, fit).transpose(2, 0, 1).reshape(p2, T * p1)
    return e, col_design(fit.R, fit.F)


def _index(k: int, size: int, name: str) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < size:
        raise ValidationError(f"{name} index {k!r} out of range [0, {size})")
    return int(k)


def row_covariance(series: MatrixSeries, fit: FactorFit, i: int, tau: float,
                   check: bool = True) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``(Phi_i, Sigma_Tp2_i)`` for row ``i`` (0-based).

    Raises :class:`SingularCovarianceError` when ``check`` and ``Phi_i`` has
    condition number above 1e12.
    """
    _check_tau(tau)
    i = _index(i, series.p1, "row")
    e, Z = _row_inputs(series, fit)
    Phi, Sig = _sandwich_parts(e[i:i + 1], Z, tau)
    if check:
        _check_invertible(Phi[0], f"Phi for row {i}")
    return Phi[0], Sig[0]


def col_covariance(series: MatrixSeries, fit: FactorFit, j: int, tau: float,
                   check: bool = True) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``(Psi_j, Sigma_Tp1_j)`` for column ``j`` (0-based)."""
    _check_tau(tau)
    j = _index(j, series.p2, "column")
    e, Z = _col_inputs(series, fit)
    Psi, Sig = _sandwich_parts(e[j:j + 1], Z, tau)
    if check:
        _check_invertible(Psi[0], f"Psi for column {j}")
    return Psi[0], Sig[0]


def all_row_covariances(series: MatrixSeries, fit: FactorFit, tau: float):
    """``(Phi, Sigma)`` stacked over all rows; shapes ``(p1, k1, k1)``. Not checked."""
    _check_tau(tau)
    return _sandwich_parts(*_row_inputs(series, fit), tau)


def all_col_covariances(series: MatrixSeries, fit: FactorFit, tau: float):
    """``(Psi, Sigma)`` stacked over all columns; shapes ``(p2, k2, k2)``. Not checked."""
    _check_tau(tau)
    return _sandwich_parts(*_col_inputs(series, fit), tau)


def inv_sqrt_psd(S: ArrayLike) -> NDArray[np.float64]:
    """Symmetric inverse square root; raises if ``S`` is not positive definite."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("expected a square matrix")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    top = max(float(np.max(np.abs(w))), 0.0)
    if top == 0.0 or float(w.min()) <= EIG_FLOOR * top:
        raise SingularCovarianceError("score covariance is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def _standardized(est, truth, H: SignMatrix, Phi, Sig, n: int) -> NDArray[np.float64]:
    diff = np.asarray(est, float) - H.d * np.asarray(truth, float)
    return math.sqrt(n) * inv_sqrt_psd(Sig) @ (np.asarray(Phi, float) @ diff)


def standardized_row_stat(fit: FactorFit, R0: ArrayLike, i: int, Phi: ArrayLike, Sig: ArrayLike,
                          T: int, p2: int) -> NDArray[np.float64]:
    """``sqrt(T p2) Sigma^-1/2 Phi (r_i - H1 r0_i)`` with ``H1 = sgn(R0' R / p1)``."""
    R0 = np.asarray(R0, dtype=np.float64)
    if R0.shape != fit.R.shape:
        raise ValidationError(f"true loadings have shape {R0.shape}, fit has {fit.R.shape}")
    i = _index(i, R0.shape[0], "row")
    H1 = sign_align(R0.T @ fit.R / R0.shape[0])
    return _standardized(fit.R[i], R0[i], H1, Phi, Sig, T * p2)


def standardized_col_stat(fit: FactorFit, C0: ArrayLike, j: int, Psi: ArrayLike, Sig: ArrayLike,
                          T: int, p1: int) -> NDArray[np.float64]:
    """``sqrt(T p1) Sigma^-1/2 Psi (c_j - H2 c0_j)`` with ``H2 = sgn(C0' C / p2)``."""
    C0 = np.asarray(C0, dtype=np.float64)
    if C0.shape != fit.C.shape:
        raise ValidationError(f"true loadings have shape {C0.shape}, fit has {fit.C.shape}")
    j = _index(j, C0.shape[0], "column")
    H2 = sign_align(C0.T @ fit.C / C0.shape[0])
    return _standardized(fit.C[j], C0[j], H2, Psi, Sig, T * p1)


def _sandwich_cov(Phi, Sig, n: int) -> NDArray[np.float64]:
    Pinv = np.linalg.inv(Phi)
    cov = Pinv @ Sig @ Pinv / n
    return 0.5 * (cov + cov.T)


def _z(alpha: float) -> float:
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise ValidationError(f"significance level must lie in (0, 1), got {alpha!r}")
    return float(norm.ppf(1.0 - alpha / 2.0))


def loading_confidence_interval(fit: FactorFit, series: MatrixSeries, index: int, tau: float,
                                alpha: float = 0.05, side: str = "row") -> NDArray[np.float64]:
    """Per-coordinate ``1 - alpha`` intervals for a loading row (``side='row'``) or column.

    Returns a ``(k, 2)`` array of ``[lower, upper]``.
    """
    z = _z(alpha)
    T, p1, p2 = series.shape
    if side == "row":
        Phi, Sig = row_covariance(series, fit, index, tau)
        est, n = fit.R[index], T * p2
    elif side == "col":
        Phi, Sig = col_covariance(series, fit, index, tau)
        est, n = fit.C[index], T * p1
    else:
        raise ValidationError("side must be 'row' or 'col'")
    half = z * np.sqrt(np.maximum(np.diag(_sandwich_cov(Phi, Sig, n)), 0.0))
    return np.column_stack([est - half, est + half])


def aspect_ratio(T: int, p1: int, p2: int) -> dict[str, float]:
    """How far ``p1`` is from ``T p2`` (rows) and ``p2`` from ``T p1`` (columns); 1 is balanced."""
    return {
        "row": max(p1 / (T * p2), T * p2 / p1),
        "col": max(p2 / (T * p1), T * p1 / p2),
    }


@dataclass
class LoadingRecord:
    index: int
    Phi: NDArray[np.float64]
    Sigma: NDArray[np.float64]
    cov: NDArray[np.float64] | None
    interval: NDArray[np.float64] | None
    standardized: NDArray[np.float64] | None = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        def lst(a):
            return None if a is None else np.asarray(a).tolist()

        return dict(index=self.index, Phi=lst(self.Phi), Sigma=lst(self.Sigma), cov=lst(self.cov),
                    interval=lst(self.interval), standardized=lst(self.standardized), error=self.error)


@dataclass
class InferenceReport:
    tau: float
    alpha: float
    rows: list[LoadingRecord]
    cols: list[LoadingRecord]
    aspect: dict[str, float]
    H1: SignMatrix | None = None
    H2: SignMatrix | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return dict(
            tau=self.tau, alpha=self.alpha, aspect_ratio=self.aspect,
            H1=None if self.H1 is None else self.H1.d.tolist(),
            H2=None if self.H2 is None else self.H2.d.tolist(),
            rows=[r.to_dict() for r in self.rows], cols=[c.to_dict() for c in self.cols],
            warnings=list(self.warnings),
        )


def _records(Phi, Sig, est, n, z, truth, H) -> list[LoadingRecord]:
    out = []
    for k in range(Phi.shape[0]):
        try:
            _check_invertible(Phi[k], f"information matrix {k}")
            cov = _sandwich_cov(Phi[k], Sig[k], n)
            half = z * np.sqrt(np.maximum(np.diag(cov), 0.0))
            ci = np.column_stack([est[k] - half, est[k] + half])
            std = None if truth is None else _standardized(est[k], truth[k], H, Phi[k], Sig[k], n)
            out.append(LoadingRecord(k, Phi[k], Sig[k], cov, ci, std))
        except SingularCovarianceError as exc:
            out.append(LoadingRecord(k, Phi[k], Sig[k], None, None, None, error=str(exc)))
    return out


def infer(series: MatrixSeries, fit: FactorFit, tau: float, alpha: float = 0.05,
          R0: ArrayLike | None = None, C0: ArrayLike | None = None) -> InferenceReport:
    """Covariances and intervals for every loading row and column.

    Rows or columns whose information matrix is singular carry an ``error``
    string instead of an interval. With true loadings, standardised
    statistics are filled in as well.
    """
    _check_tau(tau)
    z = _z(alpha)
    T, p1, p2 = series.shape
    H1 = H2 = None
    if R0 is not None:
        R0 = np.asarray(R0, dtype=np.float64)
        if R0.shape != fit.R.shape:
            raise ValidationError("true row loadings have the wrong shape")
        H1 = sign_align(R0.T @ fit.R / p1)
    if C0 is not None:
        C0 = np.asarray(C0, dtype=np.float64)
        if C0.shape != fit.C.shape:
            raise ValidationError("true column loadings have the wrong shape")
        H2 = sign_align(C0.T @ fit.C / p2)
    Phi, SigR = all_row_covariances(series, fit, tau)
    Psi, SigC = all_col_covariances(series, fit, tau)
    rows = _records(Phi, SigR, fit.R, T * p2, z, R0, H1)
    cols = _records(Psi, SigC, fit.C, T * p1, z, C0, H2)
    aspect = aspect_ratio(T, p1, p2)
    warnings = []
    bad = sum(r.error is not None for r in rows) + sum(c.error is not None for c in cols)
    if bad:
        warnings.append(f"{bad} loading rows/columns have singular information matrices")
    return InferenceReport(tau=float(tau), alpha=float(alpha), rows=rows, cols=cols, aspect=aspect,
                           H1=H1, H2=H2, warnings=warnings)
