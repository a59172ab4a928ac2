"""Seeded data generation and the Monte Carlo harnesses.

The data generating process draws ``R0, C0`` with iid ``U(-1, 1)`` entries and
lets both the factors and the idiosyncratic errors follow AR(1) recursions,

    F_t = phi F_{t-1} + sqrt(1 - phi^2) eps_t,     vec(eps_t) ~ N(0, I)
    E_t = psi E_{t-1} + sqrt(1 - psi^2) U_t,       U_t iid normal / t5 / t3

started from ``F_0 = eps_0`` and ``E_0 = U_0``; ``X_t = R0 F_t C0' + E_t``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .baselines import alpha_pca_fit, ls_alternating_fit
from .core import FactorFit, MatrixSeries
from .errors import MFMError, ValidationError
from .huber import HuberConfig
from .ihr import IhrOptions, fit as ihr_fit
from .normalization import normalize_fit
from .rng import derive_seed, make_rng
from .validation import space_distance

__all__ = [
    "DgpParams",
    "SimulatedData",
    "generate",
    "setting_params",
    "run_replications",
    "run_table1",
    "run_table3",
    "run_normality_study",
    "NormalityResult",
    "ESTIMATORS",
]

logger = logging.getLogger(__name__)

ERROR_DISTS = ("normal", "t5", "t3")


@dataclass(frozen=True)
class DgpParams:
    T: int
    p1: int
    p2: int
    k1: int = 3
    k2: int = 3
    phi: float = 0.1
    psi: float = 0.1
    error_dist: str = "normal"
    seed: int = 0
    # rescale t draws to unit variance (sensitivity analysis only)
    standardize_t: bool = False

    def __post_init__(self) -> None:
        if min(self.T, self.p1, self.p2, self.k1, self.k2) < 1:
            raise ValidationError("dimensions and factor numbers must be positive")
        if self.k1 > self.p1 or self.k2 > self.p2:
            raise ValidationError("factor numbers exceed dimensions")
        if not (abs(self.phi) < 1 and abs(self.psi) < 1):
            raise ValidationError("AR coefficients must lie in (-1, 1)")
        if self.error_dist not in ERROR_DISTS:
            raise ValidationError(f"error_dist must be one of {ERROR_DISTS}")

    def replace(self, **changes) -> "DgpParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SimulatedData:
    series: MatrixSeries
    R0: NDArray[np.float64]
    C0: NDArray[np.float64]
    F0: NDArray[np.float64]
    E: NDArray[np.float64]


def _draw_errors(rng: np.random.Generator, shape, dist: str, standardize: bool) -> NDArray[np.float64]:
    if dist == "normal":
        return rng.standard_normal(shape)
    df = 5 if dist == "t5" else 3
    U = rng.standard_t(df, size=shape)
    if standardize:
        U = U / math.sqrt(df / (df - 2))
    return U


def _ar1(innov: NDArray[np.float64], coef: float) -> NDArray[np.float64]:
    out = np.empty_like(innov)
    out[0] = innov[0]
    s = math.sqrt(1.0 - coef * coef)
    for t in range(1, innov.shape[0]):
        out[t] = coef * out[t - 1] + s * innov[t]
    return out[1:]


def generate(params: DgpParams) -> SimulatedData:
    """Draw one data set. Draw order is fixed: R0, C0, eps, U."""
    rng = make_rng(params.seed)
    T, p1, p2, k1, k2 = params.T, params.p1, params.p2, params.k1, params.k2
    R0 = rng.uniform(-1.0, 1.0, size=(p1, k1))
    C0 = rng.uniform(-1.0, 1.0, size=(p2, k2))
    eps = rng.standard_normal((T + 1, k1, k2))
    U = _draw_errors(rng, (T + 1, p1, p2), params.error_dist, params.standardize_t)
    F0 = _ar1(eps, params.phi)
    E = _ar1(U, params.psi)
    X = np.einsum("ia,tab,jb->tij", R0, F0, C0, optimize=True) + E
    return SimulatedData(MatrixSeries(X), R0, C0, F0, E)


def setting_params(setting: str, T: int, dist: str, seed: int = 0, **kw) -> DgpParams:
    """Setting A: ``p1 = 20, p2 = T``; setting B: ``p2 = 20, p1 = T``; phi = psi = 0.1."""
    if setting == "A":
        return DgpParams(T=T, p1=20, p2=T, error_dist=dist, seed=seed, **kw)
    if setting == "B":
        return DgpParams(T=T, p1=T, p2=20, error_dist=dist, seed=seed, **kw)
    raise ValidationError(f"unknown setting {setting!r}")


# -- estimators ---------------------------------------------------------------

def _ihr(series: MatrixSeries, k1: int, k2: int, seed: int) -> FactorFit:
    return ihr_fit(series, IhrOptions(k1=k1, k2=k2, seed=seed))


def _ls(series: MatrixSeries, k1: int, k2: int, seed: int) -> FactorFit:
    return ls_alternating_fit(series, k1, k2)


def _apca(series: MatrixSeries, k1: int, k2: int, seed: int) -> FactorFit:
    return alpha_pca_fit(series, k1, k2)


ESTIMATORS: dict[str, Callable[[MatrixSeries, int, int, int], FactorFit]] = {
    "ihr": _ihr,
    "ls": _ls,
    "alpha_pca": _apca,
}


# -- replication machinery ----------------------------------------------------

def run_replications(task: Callable, reps: int, threads: int = 1) -> list:
    """Evaluate ``task(rep)`` for ``rep = 0..reps-1``; results stay in rep order.

    ``task`` must be picklable (a module-level function or ``functools.partial``)
    when ``threads > 1``.
    """
    if threads <= 1:
        return [task(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(task, range(reps)))


def _table1_rep(rep: int, *, setting, dist, T, estimators, master_seed):
    seed = derive_seed(master_seed, rep)
    data = generate(setting_params(setting, T, dist, seed=seed))
    out = {}
    for name in estimators:
        try:
            f = ESTIMATORS[name](data.series, 3, 3, derive_seed(seed, 1))
            out[name] = (space_distance(f.R, data.R0), space_distance(f.C, data.C0))
        except MFMError as exc:
            logger.warning("rep %d: %s failed: %s", rep, name, exc)
            out[name] = None
    return out


def _mean_sd(x: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else float("nan")


def run_table1(
    setting: str,
    dist: str,
    reps: int,
    estimators: Iterable[str] = ("ihr", "alpha_pca"),
    T_values: Iterable[int] = (20,),
    master_seed: int = 2024,
    threads: int = 1,
) -> list[dict]:
    """Mean and sd of ``D(R^, R0)`` and ``D(C^, C0)`` per ``T`` and estimator.

    Returns one row per ``(T, estimator)`` with keys ``setting, dist, T, p1,
    p2, estimator, D_R_mean, D_R_sd, D_C_mean, D_C_sd, reps, failures``.
    """
    from functools import partial

    if reps < 2:
        raise ValidationError("reps must be >= 2")
    estimators = list(estimators)
    for name in estimators:
        if name not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {name!r}")
    rows = []
    for T in T_values:
        prm = setting_params(setting, T, dist)
        task = partial(_table1_rep, setting=setting, dist=dist, T=T,
                       estimators=estimators, master_seed=derive_seed(master_seed, T))
        results = run_replications(task, reps, threads)
        for name in estimators:
            ok = [r[name] for r in results if r[name] is not None]
            dr, sr = _mean_sd([d[0] for d in ok])
            dc, sc = _mean_sd([d[1] for d in ok])
            rows.append(dict(setting=setting, dist=dist, T=T, p1=prm.p1, p2=prm.p2,
                             estimator=name, D_R_mean=dr, D_R_sd=sr, D_C_mean=dc, D_C_sd=sc,
                             reps=len(ok), failures=reps - len(ok)))
    return rows


def _table3_rep(rep: int, *, setting, dist, T, selectors, master_seed, m):
    from .ranks import select_from_fit, alpha_pca_er

    seed = derive_seed(master_seed, rep)
    data = generate(setting_params(setting, T, dist, seed=seed))
    out = {}
    need_ihr = any(s in ("ihr_rm", "ihr_er") for s in selectors)
    if need_ihr:
        try:
            over = ihr_fit(data.series, IhrOptions(k1=m, k2=m, seed=derive_seed(seed, 1), strict_rank=False))
            if "ihr_rm" in selectors:
                sel = select_from_fit(over, data.series.shape, method="RM")
                out["ihr_rm"] = (sel.k1_hat, sel.k2_hat)
            if "ihr_er" in selectors:
                sel = select_from_fit(over, data.series.shape, method="ER")
                out["ihr_er"] = (sel.k1_hat, sel.k2_hat)
        except MFMError as exc:
            logger.warning("rep %d: over-fitted IHR failed: %s", rep, exc)
            for s in ("ihr_rm", "ihr_er"):
                if s in selectors:
                    out[s] = None
    if "alpha_pca_er" in selectors:
        sel = alpha_pca_er(data.series, m, m)
        out["alpha_pca_er"] = (sel.k1_hat, sel.k2_hat)
    return out


def run_table3(
    setting: str,
    dist: str,
    reps: int,
    selectors: Iterable[str] = ("ihr_rm", "ihr_er"),
    T_values: Iterable[int] = (20,),
    master_seed: int = 2024,
    m: int = 6,
    true_k: tuple[int, int] = (3, 3),
    threads: int = 1,
) -> list[dict]:
    """Frequencies of exact recovery and under-estimation of ``(k1, k2)``."""
    from functools import partial

    selectors = list(selectors)
    known = {"ihr_rm", "ihr_er", "alpha_pca_er"}
    for s in selectors:
        if s not in known:
            raise ValidationError(f"unknown selector {s!r}")
    rows = []
    for T in T_values:
        task = partial(_table3_rep, setting=setting, dist=dist, T=T, selectors=selectors,
                       master_seed=derive_seed(master_seed, 10_000 + T), m=m)
        results = run_replications(task, reps, threads)
        for s in selectors:
            ok = [r[s] for r in results if r.get(s) is not None]
            n = len(ok)
            exact = sum(1 for k in ok if k == true_k) / n if n else float("nan")
            under = sum(1 for k in ok if k[0] < true_k[0] or k[1] < true_k[1]) / n if n else float("nan")
            rows.append(dict(setting=setting, dist=dist, T=T, selector=s, exact=exact,
                             under=under, reps=n, failures=reps - n))
    return rows


# -- asymptotic normality study -------------------------------------------------

@dataclass
class NormalityResult:
    side: str
    samples: NDArray[np.float64]
    mean: float
    variance: float
    ks_distance: float | None
    dropped: int
    histogram: list[dict]


def _histogram(x: NDArray[np.float64], bins: int = 40, lim: float = 4.0) -> list[dict]:
    edges = np.linspace(-lim, lim, bins + 1)
    counts, _ = np.histogram(np.clip(x, -lim, lim), bins=edges)
    width = edges[1] - edges[0]
    n = max(x.size, 1)
    return [dict(bin_left=float(edges[b]), bin_right=float(edges[b + 1]), count=int(counts[b]),
                 density=float(counts[b] / (n * width))) for b in range(bins)]


def _normality_rep(rep: int, *, params: DgpParams, side: str, master_seed: int):
    from .inference import (col_covariance, row_covariance, select_tau,
                            standardized_col_stat, standardized_row_stat)

    seed = derive_seed(master_seed, rep)
    data = generate(params.replace(seed=seed))
    series = data.series
    T, p1, p2 = series.shape
    # normalised truth, so the sign-alignment is against the identified loadings
    R0, C0, _, _ = normalize_fit(data.R0, data.C0, data.F0)
    try:
        prelim = ls_alternating_fit(series, params.k1, params.k2)
        tau = select_tau(series, prelim)
        f = ihr_fit(series, IhrOptions(k1=params.k1, k2=params.k2, huber=HuberConfig(tau=tau),
                                       init="random_normal", seed=derive_seed(seed, 1)))
        if side == "row":
            i = p1 // 2
            Phi, Sig = row_covariance(series, f, i, tau)
            z = standardized_row_stat(f, R0, i, Phi, Sig, T, p2)
        else:
            j = p2 // 2
            Psi, Sig = col_covariance(series, f, j, tau)
            z = standardized_col_stat(f, C0, j, Psi, Sig, T, p1)
    except MFMError as exc:
        logger.info("normality rep %d dropped: %s", rep, exc)
        return None
    return float(z[0])


def run_normality_study(
    params: DgpParams,
    reps: int = 2000,
    side: str = "row",
    master_seed: int = 7,
    threads: int = 1,
    bins: int = 40,
) -> NormalityResult:
    """First coordinate of the standardised loading statistic across replications.

    ``side='row'`` studies ``r_i`` at ``i = floor(p1/2)``; ``side='col'`` studies
    ``c_j`` at ``j = floor(p2/2)``. The errors should be independent, so
    ``params.psi`` must be zero.
    """
    from functools import partial

    if params.psi != 0:
        raise ValidationError("the normality study needs independent errors (psi = 0)")
    if side not in ("row", "col"):
        raise ValidationError("side must be 'row' or 'col'")
    task = partial(_normality_rep, params=params, side=side, master_seed=master_seed)
    raw = run_replications(task, reps, threads)
    x = np.array([v for v in raw if v is not None], dtype=float)
    dropped = reps - x.size
    mean = float(x.mean()) if x.size else float("nan")
    var = float(x.var(ddof=1)) if x.size > 1 else float("nan")
    ks = float(stats.kstest(x, "norm").statistic) if x.size > 1 else None
    return NormalityResult(side=side, samples=x, mean=mean, variance=var, ks_distance=ks,
                           dropped=dropped, histogram=_histogram(x, bins))
