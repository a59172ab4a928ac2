"""Non-robust reference estimators.

``alpha_pca_fit`` is alpha-PCA with alpha = 0: the loadings are the leading
eigenvectors of the pooled row and column second-moment matrices.
``ls_alternating_fit`` is the alternating least-squares analogue of IHR,
obtained by running IHR with an effectively infinite Huber threshold.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .core import FactorFit, MatrixSeries, evaluate_objective
from .errors import ValidationError
from .normalization import normalize_fit, sorted_eigh

__all__ = [
    "BaselineKind",
    "LS_TAU",
    "second_moment_matrices",
    "alpha_pca_loadings",
    "alpha_pca_fit",
    "ls_alternating_fit",
]

# Huber threshold that makes every IRLS weight equal to one
LS_TAU = 1e12


class BaselineKind(str, Enum):
    ALPHA_PCA_ZERO = "alpha_pca_zero"
    LEAST_SQUARES_ALT = "least_squares_alt"


def second_moment_matrices(series: MatrixSeries) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``M_R = sum X_t X_t' / (T p1 p2)`` and ``M_C = sum X_t' X_t / (T p1 p2)``."""
    X = series.data
    denom = X.shape[0] * X.shape[1] * X.shape[2]
    M_R = np.einsum("tij,tkj->ik", X, X, optimize=True) / denom
    M_C = np.einsum("tij,tik->jk", X, X, optimize=True) / denom
    return M_R, M_C


def alpha_pca_loadings(series: MatrixSeries, k1: int, k2: int):
    """Leading-eigenvector loadings scaled so that ``R'R/p1 = I``, ``C'C/p2 = I``."""
    T, p1, p2 = series.shape
    if not (1 <= k1 <= p1 and 1 <= k2 <= p2):
        raise ValidationError(f"factor numbers ({k1}, {k2}) out of range for p1={p1}, p2={p2}")
    M_R, M_C = second_moment_matrices(series)
    w1, V1 = sorted_eigh(M_R)
    w2, V2 = sorted_eigh(M_C)
    R = np.sqrt(p1) * V1[:, :k1]
    C = np.sqrt(p2) * V2[:, :k2]
    return R, C, w1, w2


def alpha_pca_fit(series: MatrixSeries, k1: int, k2: int) -> FactorFit:
    """alpha-PCA (alpha = 0) estimate, normalised like an IHR fit."""
    T, p1, p2 = series.shape
    R, C, w1, w2 = alpha_pca_loadings(series, k1, k2)
    F = np.einsum("ia,tij,jb->tab", R, series.data, C, optimize=True) / (p1 * p2)
    R, C, F, _ = normalize_fit(R, C, F, strict=False)
    fit = FactorFit(R, C, F, normalized=True, iterations=0, converged=True,
                    diagnostics={"method": "alpha_pca", "eig_row": w1.tolist(), "eig_col": w2.tolist()})
    e = series.data - fit.common_components()
    med = float(np.median(np.abs(e)))
    tau_eval = 1.345 * med / 0.6745 if med > 0 else 1.345
    fit.diagnostics["tau_eval"] = tau_eval
    return fit.replace(objective_value=evaluate_objective(series, fit, tau_eval))


def ls_alternating_fit(series: MatrixSeries, k1: int, k2: int, opts=None) -> FactorFit:
    """IHR with every Huber weight pinned to one, i.e. alternating least squares.

    ``opts`` is an :class:`~robust_mfm.ihr.IhrOptions`; its Huber settings are
    replaced by a fixed threshold of :data:`LS_TAU`. Without options the run
    starts from the alpha-PCA loadings.
    """
    from .huber import HuberConfig
    from .ihr import IhrOptions, fit

    if opts is None:
        opts = IhrOptions(k1=k1, k2=k2, init="alpha_pca")
    if (opts.k1, opts.k2) != (k1, k2):
        opts = opts.replace(k1=k1, k2=k2)
    h = opts.huber
    opts = opts.replace(huber=HuberConfig(tau=LS_TAU, c1=h.c1, max_irls_iters=h.max_irls_iters,
                                          irls_tol=h.irls_tol, seed=h.seed))
    out = fit(series, opts)
    out.diagnostics["method"] = "ls"
    return out
