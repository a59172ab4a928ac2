"""Iterative Huber Regression (IHR) for the matrix factor model.

One sweep updates, in order,

1. every row loading ``r_i`` by a Huber regression of ``{x_{t,ij}}_{t,j}`` on
   ``{F_t c_j}``,
2. every column loading ``c_j`` by a Huber regression of ``{x_{t,ij}}_{t,i}``
   on ``{F_t' r_i}``,
3. every factor matrix ``F_t`` by a Huber regression of ``{x_{t,ij}}_{i,j}``
   on ``{c_j kron r_i}``,

and then re-imposes the identification constraints. Within each step all
regressions share one design matrix, so they are solved as a single batch.
Sweeps stop once ``sum_t ||S_t^(s+1) - S_t^(s)||_F <= cc_tol_factor * T p1 p2``
where ``S_t = R F_t C'``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import FactorFit, MatrixSeries, evaluate_objective
from .errors import NumericalError, ValidationError
from .huber import MAD_CONSISTENCY, HuberConfig, IrlsResult, irls_batch
from .normalization import normalize_fit, normalize_loadings
from .rng import make_rng

__all__ = [
    "IhrOptions",
    "init_factor_matrices",
    "update_rows",
    "update_cols",
    "update_factors",
    "row_design",
    "col_design",
    "factor_design",
    "fit",
]

logger = logging.getLogger(__name__)

InitKind = Literal["random_normal", "warm", "alpha_pca"]


@dataclass(frozen=True)
class IhrOptions:
    k1: int
    k2: int
    huber: HuberConfig = dataclasses.field(default_factory=HuberConfig)
    max_sweeps: int = 100
    cc_tol_factor: float = 1e-4
    init: InitKind = "random_normal"
    seed: int = 0
    R0: NDArray[np.float64] | None = dataclasses.field(default=None, repr=False, compare=False)
    C0: NDArray[np.float64] | None = dataclasses.field(default=None, repr=False, compare=False)
    # over-fitted runs (rank selection) tolerate collapsing factor directions
    strict_rank: bool = True

    def __post_init__(self) -> None:
        if self.k1 < 1 or self.k2 < 1:
            raise ValidationError("k1 and k2 must be positive")
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be >= 1")
        if not self.cc_tol_factor > 0:
            raise ValidationError("cc_tol_factor must be positive")
        if self.init not in ("random_normal", "warm", "alpha_pca"):
            raise ValidationError(f"unknown init {self.init!r}")
        if self.init == "warm" and (self.R0 is None or self.C0 is None):
            raise ValidationError("warm init needs R0 and C0")

    def replace(self, **changes) -> "IhrOptions":
        return dataclasses.replace(self, **changes)


def _check_normalized(A: NDArray[np.float64], name: str, tol: float = 1e-8) -> None:
    p, k = A.shape
    if np.max(np.abs(A.T @ A / p - np.eye(k))) > tol:
        raise ValidationError(f"{name} does not satisfy {name}'{name}/p = I")


def init_factor_matrices(series: MatrixSeries, R0hat: ArrayLike, C0hat: ArrayLike) -> NDArray[np.float64]:
    """Projection estimate ``F_t = R' X_t C / (p1 p2)`` for normalised loadings."""
    R = np.asarray(R0hat, dtype=np.float64)
    C = np.asarray(C0hat, dtype=np.float64)
    T, p1, p2 = series.shape
    if R.shape[0] != p1 or C.shape[0] != p2:
        raise ValidationError("loading dimensions do not match the series")
    _check_normalized(R, "R")
    _check_normalized(C, "C")
    return np.einsum("ia,tij,jb->tab", R, series.data, C, optimize=True) / (p1 * p2)


# Design matrices. Observations are ordered (t, j) for rows, (t, i) for
# columns and (i, j) for factors, all with the last index fastest.

def row_design(F: NDArray[np.float64], C: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rows ``(F_t c_j)'`` for ``(t, j)``; shape ``(T p2, k1)``."""
    T, k1, _ = F.shape
    return np.einsum("tab,jb->tja", F, C).reshape(T * C.shape[0], k1)


def col_design(R: NDArray[np.float64], F: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rows ``(F_t' r_i)'`` for ``(t, i)``; shape ``(T p1, k2)``."""
    T, _, k2 = F.shape
    return np.einsum("ia,tab->tib", R, F).reshape(T * R.shape[0], k2)


def factor_design(R: NDArray[np.float64], C: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rows ``(c_j kron r_i)'`` for ``(i, j)``; shape ``(p1 p2, k1 k2)``.

    Column ``b*k1 + a`` holds ``r_ia c_jb`` so the coefficient vector is the
    column-stacked ``vec(F)``.
    """
    p1, k1 = R.shape
    p2, k2 = C.shape
    return np.einsum("ia,jb->ijba", R, C).reshape(p1 * p2, k1 * k2)


def _vec(F: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.swapaxes(F, -1, -2).reshape(F.shape[0], -1)


def _unvec(v: NDArray[np.float64], k1: int, k2: int) -> NDArray[np.float64]:
    return np.swapaxes(v.reshape(v.shape[0], k2, k1), -1, -2)


def _check_result(res: IrlsResult, what: str) -> None:
    bad = np.flatnonzero(~np.all(np.isfinite(res.coef), axis=1))
    if bad.size:
        raise NumericalError(f"Huber regression failed for {what} {int(bad[0])}")


def _rows(series, F, C, cfg, R_prev) -> IrlsResult:
    T, p1, p2 = series.shape
    Y = series.data.transpose(1, 0, 2).reshape(p1, T * p2)
    res = irls_batch(Y, row_design(F, C), R_prev, cfg)
    _check_result(res, "row")
    return res


def _cols(series, R, F, cfg, C_prev) -> IrlsResult:
    T, p1, p2 = series.shape
    Y = series.data.transpose(2, 0, 1).reshape(p2, T * p1)
    res = irls_batch(Y, col_design(R, F), C_prev, cfg)
    _check_result(res, "column")
    return res


def _factors(series, R, C, cfg, F_prev) -> IrlsResult:
    T, p1, p2 = series.shape
    Y = series.data.reshape(T, p1 * p2)
    B0 = None if F_prev is None else _vec(F_prev)
    res = irls_batch(Y, factor_design(R, C), B0, cfg)
    _check_result(res, "time")
    return res


def update_rows(series: MatrixSeries, F: ArrayLike, C: ArrayLike, cfg: HuberConfig,
                R_prev: ArrayLike | None = None) -> NDArray[np.float64]:
    """Row loadings given factors and column loadings; ``p1 x k1``."""
    return _rows(series, np.asarray(F, float), np.asarray(C, float), cfg, R_prev).coef


def update_cols(series: MatrixSeries, R: ArrayLike, F: ArrayLike, cfg: HuberConfig,
                C_prev: ArrayLike | None = None) -> NDArray[np.float64]:
    """Column loadings given row loadings and factors; ``p2 x k2``."""
    return _cols(series, np.asarray(R, float), np.asarray(F, float), cfg, C_prev).coef


def update_factors(series: MatrixSeries, R: ArrayLike, C: ArrayLike, cfg: HuberConfig,
                   F_prev: ArrayLike | None = None) -> NDArray[np.float64]:
    """Factor matrices given both loadings; ``T x k1 x k2``."""
    R = np.asarray(R, float)
    C = np.asarray(C, float)
    res = _factors(series, R, C, cfg, None if F_prev is None else np.asarray(F_prev, float))
    return _unvec(res.coef, R.shape[1], C.shape[1])


def _initial_loadings(series: MatrixSeries, opts: IhrOptions):
    T, p1, p2 = series.shape
    if opts.init == "random_normal":
        rng = make_rng(opts.seed)
        R0 = rng.standard_normal((p1, opts.k1))
        C0 = rng.standard_normal((p2, opts.k2))
    elif opts.init == "warm":
        R0 = np.asarray(opts.R0, dtype=np.float64)
        C0 = np.asarray(opts.C0, dtype=np.float64)
        if R0.shape != (p1, opts.k1) or C0.shape != (p2, opts.k2):
            raise ValidationError("warm-start loadings have the wrong shape")
    else:
        from .baselines import alpha_pca_loadings

        R0, C0, _, _ = alpha_pca_loadings(series, opts.k1, opts.k2)
    return normalize_loadings(R0), normalize_loadings(C0)


def _report_tau(cfg: HuberConfig, resid: NDArray[np.float64]) -> float:
    """Threshold used to report the objective of a fit."""
    if not cfg.adaptive:
        return float(cfg.tau)
    med = float(np.median(np.abs(resid)))
    return cfg.c1 * med / MAD_CONSISTENCY if med > 0 else cfg.c1


def _cc(R, F, C):
    return np.einsum("ia,tab,jb->tij", R, F, C, optimize=True)


def fit(series: MatrixSeries, opts: IhrOptions) -> FactorFit:
    """Estimate ``(R, C, F_t)`` by Iterative Huber Regression.

    Returns a normalised :class:`FactorFit`. ``converged`` is False when
    ``max_sweeps`` was reached before the common components stabilised.
    ``diagnostics`` records the threshold used to report the objective
    (``tau_eval``), the objective at the initial iterate, the per-sweep
    common-component changes and how often the IRLS ridge fallback fired.
    """
    if not isinstance(series, MatrixSeries):
        series = MatrixSeries(series)
    T, p1, p2 = series.shape
    k1, k2 = opts.k1, opts.k2
    if k1 > p1 or k2 > p2:
        raise ValidationError(f"factor numbers ({k1}, {k2}) exceed dimensions ({p1}, {p2})")
    cfg = opts.huber

    R, C = _initial_loadings(series, opts)
    F = init_factor_matrices(series, R, C)
    R_init, C_init, F_init = R, C, F
    S_prev = _cc(R, F, C)

    tol = opts.cc_tol_factor * T * p1 * p2
    deltas: list[float] = []
    cc_shift = 0.0
    ridge_count = 0
    irls_iters = 0
    converged = False
    sweeps = 0
    for sweep in range(1, opts.max_sweeps + 1):
        sweeps = sweep
        try:
            r_res = _rows(series, F, C, cfg, R)
            Rt = r_res.coef
            c_res = _cols(series, Rt, F, cfg, C)
            Ct = c_res.coef
            f_res = _factors(series, Rt, Ct, cfg, F)
            Ft = _unvec(f_res.coef, k1, k2)
            R, C, F, _ = normalize_fit(Rt, Ct, Ft, strict=opts.strict_rank)
        except NumericalError as exc:
            exc.sweep = sweep
            raise NumericalError(f"sweep {sweep}: {exc}", sweep=sweep) from exc
        for res in (r_res, c_res, f_res):
            ridge_count += int(res.ridge_used.sum())
            irls_iters += int(res.iterations.sum())
        S = _cc(R, F, C)
        if not np.all(np.isfinite(S)):
            raise NumericalError(f"non-finite common components at sweep {sweep}", sweep=sweep)
        cc_shift = max(cc_shift, float(np.max(np.abs(S - _cc(Rt, Ft, Ct)))))
        delta = float(np.sum(np.linalg.norm(S - S_prev, axis=(1, 2))))
        deltas.append(delta)
        S_prev = S
        if delta <= tol:
            converged = True
            break

    if not converged:
        logger.warning("IHR stopped after %d sweeps without converging", sweeps)

    out = FactorFit(R, C, F, normalized=True, iterations=sweeps, converged=converged)
    resid = series.data - S_prev
    tau_eval = _report_tau(cfg, resid)
    init_fit = FactorFit(R_init, C_init, F_init)
    out.diagnostics.update(
        method="ihr",
        huber=cfg.describe(),
        tau_eval=tau_eval,
        initial_objective=evaluate_objective(series, init_fit, tau_eval),
        cc_changes=deltas,
        cc_tolerance=tol,
        max_normalization_cc_shift=cc_shift,
        ridge_fallbacks=ridge_count,
        irls_iterations=irls_iters,
        init=opts.init,
    )
    return out.replace(objective_value=evaluate_objective(series, out, tau_eval))
