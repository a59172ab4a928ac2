"""Subspace distance and rolling out-of-sample validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import FactorFit, MatrixSeries
from .errors import MFMError, ValidationError

__all__ = [
    "space_distance",
    "kron_space_distance",
    "orthonormal_basis",
    "RollingReport",
    "WindowRecord",
    "rolling_validate",
]

logger = logging.getLogger(__name__)


def orthonormal_basis(Q: ArrayLike) -> NDArray[np.float64]:
    """Orthonormal basis (QR) of the column space of ``Q``."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[:, None]
    if Q.ndim != 2 or Q.shape[1] == 0:
        raise ValidationError("expected a non-empty p x q matrix")
    if Q.shape[1] > Q.shape[0]:
        raise ValidationError("more columns than rows; columns cannot be independent")
    norms = np.linalg.norm(Q, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(Q)):
        raise ValidationError("input has a zero or non-finite column")
    q, r = np.linalg.qr(Q / norms)
    if np.min(np.abs(np.diag(r))) < 1e-12:
        raise ValidationError("columns are linearly dependent")
    return q


def space_distance(Q1: ArrayLike, Q2: ArrayLike) -> float:
    """``sqrt(1 - tr(P1 P2) / max(q1, q2))`` for the projections onto both column spaces.

    0 for identical spans and 1 for orthogonal ones. Inputs need not be
    orthonormal.
    """
    A = orthonormal_basis(Q1)
    B = orthonormal_basis(Q2)
    if A.shape[0] != B.shape[0]:
        raise ValidationError(f"row dimensions differ: {A.shape[0]} vs {B.shape[0]}")
    overlap = float(np.sum((A.T @ B) ** 2))
    val = 1.0 - overlap / max(A.shape[1], B.shape[1])
    return float(np.sqrt(min(max(val, 0.0), 1.0)))


def kron_space_distance(C1, R1, C2, R2) -> float:
    """``space_distance(C1 kron R1, C2 kron R2)`` without forming the Kronecker products.

    Uses that the Kronecker product of orthonormal bases is an orthonormal
    basis and that the overlap trace factorises.
    """
    a1, b1 = orthonormal_basis(C1), orthonormal_basis(R1)
    a2, b2 = orthonormal_basis(C2), orthonormal_basis(R2)
    overlap = float(np.sum((a1.T @ a2) ** 2) * np.sum((b1.T @ b2) ** 2))
    q = max(a1.shape[1] * b1.shape[1], a2.shape[1] * b2.shape[1])
    return float(np.sqrt(min(max(1.0 - overlap / q, 0.0), 1.0)))


@dataclass
class WindowRecord:
    window_index: int
    train_start: int
    train_stop: int
    MSE: float
    rho: float
    v: float | None


@dataclass
class RollingReport:
    windows: list[WindowRecord]
    mean_MSE: float
    mean_rho: float
    mean_v: float | None
    skipped: int
    config: dict[str, Any] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return dict(self.config, mean_MSE=self.mean_MSE, mean_rho=self.mean_rho,
                    mean_v=self.mean_v, windows=len(self.windows), skipped=self.skipped)


def _fit_window(train: MatrixSeries, k1: int, k2: int, method: str, opts) -> FactorFit:
    from .baselines import alpha_pca_fit, ls_alternating_fit
    from .ihr import IhrOptions, fit

    if method == "ihr":
        o = opts if opts is not None else IhrOptions(k1=k1, k2=k2)
        return fit(train, o.replace(k1=k1, k2=k2))
    if method == "ls":
        return ls_alternating_fit(train, k1, k2, opts)
    if method == "alpha_pca":
        return alpha_pca_fit(train, k1, k2)
    raise ValidationError(f"unknown method {method!r}")


def rolling_validate(
    series: MatrixSeries,
    bandwidth: int,
    horizon: int = 12,
    k1: int = 1,
    k2: int = 1,
    method: str = "ihr",
    opts=None,
) -> RollingReport:
    """Rolling out-of-sample evaluation of a loading estimator.

    Window ``w`` trains on observations ``[w h, w h + n h)`` (``n`` =
    ``bandwidth``, ``h`` = ``horizon``) and predicts the next ``h`` matrices by
    projecting them onto the estimated loadings,
    ``Y^ = R R' Y C C' / (p1 p2)``. Per window it reports

    * ``MSE = sum ||Y^ - Y||_F^2 / (h p1 p2)``
    * ``rho = sum ||Y^ - Y||_F^2 / sum ||Y - Ybar||_F^2`` with ``Ybar`` the
      training-window mean matrix
    * ``v = D(C kron R, C_prev kron R_prev)`` against the previous window
      (``None`` for the first window or after a skipped window).
    """
    if not isinstance(series, MatrixSeries):
        series = MatrixSeries(series)
    n, h = int(bandwidth), int(horizon)
    if n < 1 or h < 1:
        raise ValidationError("bandwidth and horizon must be positive")
    T, p1, p2 = series.shape
    train_len = n * h
    if T < train_len + h:
        raise ValidationError(f"need T >= n*h + h = {train_len + h}, got T = {T}")
    n_windows = (T - train_len) // h
    records: list[WindowRecord] = []
    skipped = 0
    prev = None
    for w in range(n_windows):
        start = w * h
        stop = start + train_len
        train = series.window(start, stop)
        test = series.data[stop:stop + h]
        try:
            f = _fit_window(train, k1, k2, method, opts)
        except MFMError as exc:
            logger.warning("window %d skipped: %s", w, exc)
            skipped += 1
            prev = None
            continue
        R, C = f.R, f.C
        Fh = np.einsum("ia,tij,jb->tab", R, test, C, optimize=True) / (p1 * p2)
        Yhat = np.einsum("ia,tab,jb->tij", R, Fh, C, optimize=True)
        sse = float(np.sum((Yhat - test) ** 2))
        ybar = train.data.mean(axis=0)
        sst = float(np.sum((test - ybar) ** 2))
        v = None if prev is None else kron_space_distance(C, R, prev[1], prev[0])
        records.append(WindowRecord(
            window_index=w, train_start=start, train_stop=stop,
            MSE=sse / (h * p1 * p2), rho=sse / sst if sst > 0 else float("nan"), v=v,
        ))
        prev = (R, C)
    vs = [r.v for r in records if r.v is not None]
    return RollingReport(
        windows=records,
        mean_MSE=float(np.mean([r.MSE for r in records])) if records else float("nan"),
        mean_rho=float(np.nanmean([r.rho for r in records])) if records else float("nan"),
        mean_v=float(np.mean(vs)) if vs else None,
        skipped=skipped,
        config=dict(bandwidth=n, horizon=h, k1=k1, k2=k2, method=method),
    )
