"""Selecting the factor numbers ``(k1, k2)`` from an over-fitted IHR run.

Both selectors read the diagonals ``sigma_1``, ``sigma_2`` of the factor
second-moment matrices of a normalised fit with ``m1 x m2`` factors.

* rank minimisation (RM) counts diagonals above ``P = sigma_{.,1} D^{-2/3}``,
  ``D = min(sqrt(T p1), sqrt(T p2), sqrt(p1 p2))``;
* eigenvalue ratio (ER) takes the argmax of ``sigma_i / (sigma_{i+1} + c alpha)``
  with ``alpha = max(1/(T p1), 1/(T p2), 1/(p1 p2))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import FactorFit, MatrixSeries
from .errors import NumericalError, ValidationError

__all__ = [
    "RankSelection",
    "convergence_rate",
    "factor_moment_diagonals",
    "select_rm",
    "select_er",
    "select_from_fit",
    "estimate_ranks",
    "alpha_pca_er",
]

logger = logging.getLogger(__name__)

DEFAULT_M = 6
RM_EXPONENT = 2.0 / 3.0
ER_FLOOR_C = 1e-4


@dataclass
class RankSelection:
    method: Literal["RM", "ER"]
    m1: int
    m2: int
    k1_hat: int
    k2_hat: int
    sigma1: NDArray[np.float64]
    sigma2: NDArray[np.float64]
    D_rate: float
    P1: float | None = None
    P2: float | None = None
    ratios1: NDArray[np.float64] | None = None
    ratios2: NDArray[np.float64] | None = None
    floor: float | None = None
    tentative: bool = False
    flags: list[str] = field(default_factory=list)

    @property
    def k_hat(self) -> tuple[int, int]:
        return (self.k1_hat, self.k2_hat)

    def to_dict(self) -> dict[str, Any]:
        def lst(a):
            return None if a is None else [float(x) for x in a]

        return dict(
            method=self.method, m1=self.m1, m2=self.m2, k1_hat=self.k1_hat, k2_hat=self.k2_hat,
            sigma1=lst(self.sigma1), sigma2=lst(self.sigma2), D_rate=self.D_rate,
            P1=self.P1, P2=self.P2, ratios1=lst(self.ratios1), ratios2=lst(self.ratios2),
            floor=self.floor, tentative=self.tentative, flags=list(self.flags),
        )


def convergence_rate(T: int, p1: int, p2: int) -> float:
    """``D = min(sqrt(T p1), sqrt(T p2), sqrt(p1 p2))``."""
    return math.sqrt(min(T * p1, T * p2, p1 * p2))


def factor_moment_diagonals(fit_m: FactorFit) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Diagonals of ``(1/T) sum F_t F_t'`` and ``(1/T) sum F_t' F_t``."""
    if not fit_m.normalized:
        raise ValidationError("factor_moment_diagonals needs a normalised fit")
    s1, s2 = fit_m.factor_moments()
    scale = max(1.0, float(np.max(np.abs(s1))), float(np.max(np.abs(s2))))
    off = max(np.max(np.abs(s1 - np.diag(np.diag(s1)))), np.max(np.abs(s2 - np.diag(np.diag(s2)))))
    if off > 1e-8 * scale:
        raise ValidationError(f"factor moments are not diagonal (off-diagonal {off:.3g}); fit not normalised")
    return np.diag(s1).copy(), np.diag(s2).copy()


def _check_sigma(sigma: ArrayLike, name: str) -> NDArray[np.float64]:
    s = np.asarray(sigma, dtype=np.float64).ravel()
    if s.size == 0 or not np.all(np.isfinite(s)):
        raise ValidationError(f"{name} must be a non-empty finite vector")
    if np.any(s < -1e-12 * max(1.0, float(np.max(np.abs(s))))):
        raise ValidationError(f"{name} has negative entries")
    if np.any(np.diff(s) > 1e-10 * max(1.0, float(s[0]))):
        raise ValidationError(f"{name} must be non-increasing")
    return np.maximum(s, 0.0)


def select_rm(sigma1: ArrayLike, sigma2: ArrayLike, T: int, p1: int, p2: int,
              exponent: float = RM_EXPONENT) -> RankSelection:
    """Rank-minimisation estimate ``k_hat = #{i : sigma_i > sigma_1 D^-exponent}``."""
    s1 = _check_sigma(sigma1, "sigma1")
    s2 = _check_sigma(sigma2, "sigma2")
    if s1[0] <= 0 or s2[0] <= 0:
        raise NumericalError("degenerate spectrum: leading factor moment is zero (no signal)")
    D = convergence_rate(T, p1, p2)
    P1 = float(s1[0] * D ** (-exponent))
    P2 = float(s2[0] * D ** (-exponent))
    k1 = max(1, int(np.sum(s1 > P1)))
    k2 = max(1, int(np.sum(s2 > P2)))
    return RankSelection("RM", s1.size, s2.size, k1, k2, s1, s2, D, P1=P1, P2=P2)


def _er_argmax(s: NDArray[np.float64], floor: float) -> tuple[int, NDArray[np.float64], bool]:
    ratios = s[:-1] / (s[1:] + floor)
    k = int(np.argmax(ratios)) + 1  # np.argmax returns the first maximiser
    tie = bool(np.sum(ratios == ratios[k - 1]) > 1)
    return k, ratios, tie


def select_er(sigma1: ArrayLike, sigma2: ArrayLike, T: int, p1: int, p2: int,
              c: float = ER_FLOOR_C) -> RankSelection:
    """Eigenvalue-ratio estimate; ties go to the smallest index and are flagged."""
    s1 = _check_sigma(sigma1, "sigma1")
    s2 = _check_sigma(sigma2, "sigma2")
    if s1.size < 2 or s2.size < 2:
        raise ValidationError("eigenvalue ratio needs m1, m2 >= 2")
    if not c >= 0:
        raise ValidationError("c must be non-negative")
    alpha = max(1.0 / (T * p1), 1.0 / (T * p2), 1.0 / (p1 * p2))
    floor = c * alpha
    if floor == 0 and (np.any(s1[1:] == 0) or np.any(s2[1:] == 0)):
        raise NumericalError("zero eigenvalue in a ratio denominator; use c > 0")
    k1, r1, tie1 = _er_argmax(s1, floor)
    k2, r2, tie2 = _er_argmax(s2, floor)
    sel = RankSelection("ER", s1.size, s2.size, k1, k2, s1, s2, convergence_rate(T, p1, p2),
                        ratios1=r1, ratios2=r2, floor=floor)
    if tie1:
        sel.flags.append("row ratio tie resolved to smallest index")
    if tie2:
        sel.flags.append("column ratio tie resolved to smallest index")
    return sel


def select_from_fit(fit_m: FactorFit, shape: tuple[int, int, int], method: str = "RM",
                    **kwargs) -> RankSelection:
    """Apply a selector to an over-fitted fit of a series with ``shape = (T, p1, p2)``.

    Selections made from an unconverged fit are marked ``tentative``.
    """
    T, p1, p2 = shape
    s1, s2 = factor_moment_diagonals(fit_m)
    if method == "RM":
        sel = select_rm(s1, s2, T, p1, p2, **kwargs)
    elif method == "ER":
        sel = select_er(s1, s2, T, p1, p2, **kwargs)
    else:
        raise ValidationError(f"unknown selector {method!r}")
    if not fit_m.converged:
        sel.tentative = True
        sel.flags.append("over-fitted IHR run did not converge")
    return sel


def estimate_ranks(series: MatrixSeries, m1: int = DEFAULT_M, m2: int = DEFAULT_M, opts=None,
                   rm_exponent: float = RM_EXPONENT, er_c: float = ER_FLOOR_C):
    """Fit IHR with ``(m1, m2)`` factors and return ``(rm, er, over_fit)``.

    Refit at the selected numbers afterwards to obtain the final estimate.
    """
    from .ihr import IhrOptions, fit

    if not isinstance(series, MatrixSeries):
        series = MatrixSeries(series)
    T, p1, p2 = series.shape
    if m1 < 2 or m2 < 2:
        raise ValidationError("m1 and m2 must be at least 2")
    if m1 > p1 or m2 > p2:
        raise ValidationError(f"(m1, m2) = ({m1}, {m2}) exceed dimensions ({p1}, {p2})")
    o = opts if opts is not None else IhrOptions(k1=m1, k2=m2)
    o = o.replace(k1=m1, k2=m2, strict_rank=False)
    over = fit(series, o)
    rm = select_from_fit(over, series.shape, "RM", exponent=rm_exponent)
    er = select_from_fit(over, series.shape, "ER", c=er_c)
    return rm, er, over


def alpha_pca_er(series: MatrixSeries, m1: int = DEFAULT_M, m2: int = DEFAULT_M,
                 c: float = ER_FLOOR_C) -> RankSelection:
    """Eigenvalue ratio on the alpha-PCA (alpha = 0) second-moment spectra."""
    from .baselines import second_moment_matrices
    from .normalization import sorted_eigh

    T, p1, p2 = series.shape
    M_R, M_C = second_moment_matrices(series)
    w1 = np.maximum(sorted_eigh(M_R)[0][:m1], 0.0)
    w2 = np.maximum(sorted_eigh(M_C)[0][:m2], 0.0)
    return select_er(w1, w2, T, p1, p2, c=c)
