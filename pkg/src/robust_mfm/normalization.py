"""Restore the identification constraints of a matrix factor fit.

Given unconstrained ``(R~, C~, F~_t)`` the normalisation returns loadings with
``R'R/p1 = I``, ``C'C/p2 = I`` and factors whose second-moment matrices
``(1/T) sum F_t F_t'`` and ``(1/T) sum F_t' F_t`` are diagonal with
non-increasing diagonals, without changing any ``R F_t C'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NumericalError, RankDeficiencyError, ValidationError

__all__ = [
    "NormalizationArtifacts",
    "normalize_fit",
    "normalize_loadings",
    "sorted_eigh",
    "column_sign_fix",
]

# relative threshold below which a singular value / eigenvalue counts as zero
RANK_TOL = 1e-12
_TIE_TOL = 1e-10


@dataclass(frozen=True)
class NormalizationArtifacts:
    U_R: NDArray[np.float64]
    Q_R: NDArray[np.float64]
    U_C: NDArray[np.float64]
    Q_C: NDArray[np.float64]
    Sigma1: NDArray[np.float64]
    Sigma2: NDArray[np.float64]
    Gamma1: NDArray[np.float64]
    Gamma2: NDArray[np.float64]
    Lambda1: NDArray[np.float64]
    Lambda2: NDArray[np.float64]
    row_signs: NDArray[np.float64]
    col_signs: NDArray[np.float64]


def _canonical_cluster_basis(V: NDArray[np.float64]) -> NDArray[np.float64]:
    """Deterministic orthonormal basis for ``span(V)``.

    Projects e_1, e_2, ... onto the span in turn and keeps each projection
    (after Gram-Schmidt) that is not negligible, so the result no longer
    depends on which basis the eigensolver happened to return.
    """
    k, m = V.shape
    P = V @ V.T
    out: list[NDArray[np.float64]] = []
    for l in range(k):
        v = P[:, l].copy()
        for u in out:
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            out.append(v / nv)
        if len(out) == m:
            break
    return np.column_stack(out) if len(out) == m else V


def _positive_first(V: NDArray[np.float64]) -> NDArray[np.float64]:
    V = V.copy()
    for c in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, c]) > 1e-12)
        if nz.size and V[nz[0], c] < 0:
            V[:, c] = -V[:, c]
    return V


def sorted_eigh(S: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigen-decomposition of a symmetric matrix with descending eigenvalues.

    Eigenvectors of (numerically) repeated eigenvalues are replaced by a
    canonical basis of their eigenspace and every eigenvector has its first
    non-negligible coordinate positive.
    """
    S = np.asarray(S, dtype=np.float64)
    S = 0.5 * (S + S.T)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, np.finfo(float).tiny)
    start = 0
    k = w.size
    while start < k:
        stop = start + 1
        while stop < k and abs(w[stop - 1] - w[stop]) <= _TIE_TOL * scale:
            stop += 1
        if stop - start > 1:
            V[:, start:stop] = _canonical_cluster_basis(V[:, start:stop])
        start = stop
    return w, _positive_first(V)


def _thin_svd(A: NDArray[np.float64], name: str, strict: bool):
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"SVD of {name} failed: {exc}") from exc
    if strict and (s.size == 0 or s[0] == 0 or s[-1] <= RANK_TOL * s[0]):
        raise RankDeficiencyError(f"{name} is rank deficient (singular values {s})")
    return U, s[:, None] * Vt


def normalize_loadings(A: ArrayLike) -> NDArray[np.float64]:
    """``sqrt(p) U`` from the thin SVD of ``A``, so that ``A'A/p = I``."""
    A = np.asarray(A, dtype=np.float64)
    U, _ = _thin_svd(A, "loading matrix", strict=True)
    return np.sqrt(A.shape[0]) * U


def column_sign_fix(A: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-column signs making every column sum of ``A`` non-negative."""
    return np.where(A.sum(axis=0) >= 0, 1.0, -1.0)


def normalize_fit(
    Rt: ArrayLike,
    Ct: ArrayLike,
    Ft: ArrayLike,
    *,
    strict: bool = True,
    sign_fix: bool = True,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NormalizationArtifacts]:
    """Normalise ``(R~, C~, F~)`` onto the identification set.

    With ``R~ = U_R Q_R`` and ``C~ = U_C Q_C`` (thin SVDs, ``Q = Lambda V'``)
    the factor second moments

        Sigma1 = 1/(T p1 p2) sum_t Q_R F_t C~'C~ F_t' Q_R'
        Sigma2 = 1/(T p1 p2) sum_t Q_C F_t' R~'R~ F_t Q_C'

    are diagonalised by ``Gamma1``, ``Gamma2`` (descending eigenvalues) and

        R = sqrt(p1) U_R Gamma1,   C = sqrt(p2) U_C Gamma2,
        F_t = Gamma1' Q_R F~_t Q_C' Gamma2 / sqrt(p1 p2).

    With ``sign_fix`` the columns of ``R`` and ``C`` are flipped to have
    non-negative sums (rows/columns of ``F_t`` follow), which pins down the
    otherwise arbitrary signs.

    ``strict`` raises :class:`RankDeficiencyError` when ``R~`` or ``C~`` is
    rank deficient or a factor second moment collapses to zero; over-fitted
    runs used for rank selection switch it off.
    """
    Rt = np.asarray(Rt, dtype=np.float64)
    Ct = np.asarray(Ct, dtype=np.float64)
    Ft = np.asarray(Ft, dtype=np.float64)
    if Ft.ndim == 2:
        Ft = Ft[None]
    p1, k1 = Rt.shape
    p2, k2 = Ct.shape
    if Ft.shape[1:] != (k1, k2):
        raise ValidationError(f"factor shape {Ft.shape[1:]} does not match ({k1}, {k2})")
    for name, a in (("R", Rt), ("C", Ct), ("F", Ft)):
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite entries in {name} before normalisation")
    T = Ft.shape[0]

    U_R, Q_R = _thin_svd(Rt, "R", strict)
    U_C, Q_C = _thin_svd(Ct, "C", strict)

    G = Q_R @ Ft @ Q_C.T  # (T, k1, k2): factors in the U_R / U_C frame
    denom = T * p1 * p2
    Sigma1 = np.einsum("tab,tcb->ac", G, G) / denom
    Sigma2 = np.einsum("tab,tac->bc", G, G) / denom
    lam1, Gam1 = sorted_eigh(Sigma1)
    lam2, Gam2 = sorted_eigh(Sigma2)
    if strict:
        for lam, which in ((lam1, "row"), (lam2, "column")):
            if lam[0] <= 0 or lam[-1] <= RANK_TOL * lam[0]:
                raise RankDeficiencyError(
                    f"{which} factor second moment is degenerate (eigenvalues {lam})"
                )

    R = np.sqrt(p1) * U_R @ Gam1
    C = np.sqrt(p2) * U_C @ Gam2
    F = Gam1.T @ G @ Gam2 / np.sqrt(p1 * p2)

    sr = np.ones(k1)
    sc = np.ones(k2)
    if sign_fix:
        sr = column_sign_fix(R)
        sc = column_sign_fix(C)
        R = R * sr
        C = C * sc
        F = sr[:, None] * F * sc[None, :]

    art = NormalizationArtifacts(
        U_R=U_R, Q_R=Q_R, U_C=U_C, Q_C=Q_C,
        Sigma1=Sigma1, Sigma2=Sigma2, Gamma1=Gam1, Gamma2=Gam2,
        Lambda1=lam1, Lambda2=lam2, row_signs=sr, col_signs=sc,
    )
    return R, C, F, art
