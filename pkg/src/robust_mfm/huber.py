"""Huber loss and the iteratively reweighted least-squares (IRLS) kernel.

Two weighting policies are supported:

* ``fixed``: plain Huber IRLS with ``w_i = min(1, tau / |e_i|)``. Each sweep
  minimises a quadratic majoriser of the Huber objective, so the objective is
  non-increasing over sweeps.
* ``adaptive``: the scale is re-estimated from the current residuals at every
  sweep, ``w_i = min(1, c1 / (|e_i| * c2))`` with ``c2 = 0.6745 / median|e|``.
  This is the usual M-estimator with MAD scale (``tau = c1 * MAD``).

The batched solver :func:`irls_batch` fits many regressions that share one
design matrix; it is the workhorse behind the row, column and factor updates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NumericalError, ValidationError

__all__ = [
    "HuberConfig",
    "IrlsResult",
    "huber_loss",
    "huber_grad",
    "huber_grad_sq",
    "huber_curvature",
    "irls_weights",
    "irls_batch",
    "irls_regress",
]

logger = logging.getLogger(__name__)

MAD_CONSISTENCY = 0.6745
HUBER_EFFICIENCY_C = 1.345
RIDGE_JITTER = 1e-10
# weighted Gram matrices with condition number above this get the ridge jitter
RIDGE_COND_LIMIT = 1e12


@dataclass(frozen=True)
class HuberConfig:
    """Robustification settings for every Huber regression in a fit.

    ``tau=None`` selects the adaptive (MAD-scaled) weight rule; a positive
    ``tau`` selects plain Huber IRLS with that threshold.
    """

    tau: float | None = None
    c1: float = HUBER_EFFICIENCY_C
    max_irls_iters: int = 50
    irls_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tau is not None and not (np.isfinite(self.tau) and self.tau > 0):
            raise ValidationError(f"tau must be a positive finite number, got {self.tau!r}")
        if not self.c1 > 0:
            raise ValidationError("c1 must be positive")
        if self.max_irls_iters < 1:
            raise ValidationError("max_irls_iters must be >= 1")
        if not self.irls_tol > 0:
            raise ValidationError("irls_tol must be positive")

    @property
    def adaptive(self) -> bool:
        return self.tau is None

    @classmethod
    def fixed(cls, tau: float, **kwargs) -> "HuberConfig":
        return cls(tau=float(tau), **kwargs)

    def describe(self) -> dict:
        return {
            "tau_policy": "adaptive" if self.adaptive else "fixed",
            "tau": self.tau,
            "c1": self.c1,
            "c2_rule": "0.6745/median(|residuals|)",
            "max_irls_iters": self.max_irls_iters,
            "irls_tol": self.irls_tol,
            "seed": self.seed,
        }


def _check_tau(tau: float) -> None:
    if not (np.isfinite(tau) and tau > 0):
        raise ValidationError(f"tau must be a positive finite number, got {tau!r}")


def _as_finite(x: ArrayLike, name: str = "x") -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def huber_loss(x: ArrayLike, tau: float):
    """Huber loss ``x**2/2`` inside ``[-tau, tau]`` and ``tau|x| - tau**2/2`` outside.

    Works elementwise on arrays; returns a float for scalar input.
    """
    _check_tau(tau)
    arr = _as_finite(x)
    a = np.abs(arr)
    out = np.where(a <= tau, 0.5 * arr * arr, tau * a - 0.5 * tau * tau)
    return float(out) if out.ndim == 0 else out


def huber_grad(x: ArrayLike, tau: float):
    """Derivative of :func:`huber_loss`: ``x`` clipped to ``[-tau, tau]``."""
    _check_tau(tau)
    arr = _as_finite(x)
    out = np.clip(arr, -tau, tau)
    return float(out) if out.ndim == 0 else out


def huber_grad_sq(x: ArrayLike, tau: float):
    """Squared derivative, ``min(x**2, tau**2)``."""
    g = huber_grad(x, tau)
    return g * g


def huber_curvature(x: ArrayLike, tau: float):
    """Second derivative (almost everywhere): the indicator ``|x| <= tau``."""
    _check_tau(tau)
    arr = _as_finite(x)
    out = (np.abs(arr) <= tau).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def _median_rows(a: NDArray[np.float64]) -> NDArray[np.float64]:
    # np.median averages the two central order statistics for even n
    return np.median(a, axis=-1)


def irls_weights(resid: NDArray[np.float64], cfg: HuberConfig) -> NDArray[np.float64]:
    """IRLS weights for a ``(m, n)`` block of residuals, one row per regression."""
    a = np.abs(resid)
    if cfg.adaptive:
        med = _median_rows(a)[:, None]
        # scale threshold c1 / c2 = c1 * median / 0.6745; zero median -> c2 = inf -> LS step
        thresh = np.where(med > 0, cfg.c1 * med / MAD_CONSISTENCY, np.inf)
    else:
        thresh = np.full((resid.shape[0], 1), cfg.tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(a > thresh, thresh / a, 1.0)
    return w


@dataclass
class IrlsResult:
    """Coefficients of a batch of Huber regressions plus solver diagnostics."""

    coef: NDArray[np.float64]
    iterations: NDArray[np.int64]
    converged: NDArray[np.bool_]
    ridge_used: NDArray[np.bool_]
    objective_trace: list = field(default_factory=list)


def _weighted_solve(
    Z: NDArray[np.float64], ZZ: NDArray[np.float64], Y: NDArray[np.float64], W: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Solve ``(Z' W_m Z) b_m = Z' W_m y_m`` for every row ``m``.

    ``ZZ`` holds the flattened outer products ``z_n z_n'`` so that all the
    weighted Gram matrices come out of one matrix product.
    """
    d = Z.shape[1]
    G = (W @ ZZ).reshape(-1, d, d)
    rhs = (W * Y) @ Z
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    ev = np.linalg.eigvalsh(G)
    top = np.max(np.abs(ev), axis=1)
    bad = (ev[:, 0] <= top / RIDGE_COND_LIMIT) | (top == 0)
    if np.any(bad):
        tr = np.trace(G[bad], axis1=1, axis2=2)
        jitter = RIDGE_JITTER * np.where(tr > 0, tr / d, 1.0)
        G[bad] = G[bad] + jitter[:, None, None] * np.eye(d)
    coef = np.linalg.solve(G, rhs[..., None])[..., 0]
    return coef, bad


def irls_batch(
    Y: ArrayLike,
    Z: ArrayLike,
    B0: ArrayLike | None,
    cfg: HuberConfig,
    *,
    track_objective: bool = False,
) -> IrlsResult:
    """Fit ``m`` Huber regressions ``y_m ~ Z b_m`` sharing the design ``Z``.

    Parameters
    ----------
    Y : (m, n) array
        One response vector per row.
    Z : (n, d) array
        Common design matrix.
    B0 : (m, d) array or None
        Starting coefficients. ``None`` starts every regression from the
        ordinary least-squares solution.
    cfg : HuberConfig
        Weight policy and stopping rule. A regression stops once the relative
        change of its coefficients drops below ``cfg.irls_tol``; stopped rows
        are frozen while the rest keep iterating.
    track_objective : bool
        Record the summed Huber objective after every sweep (fixed tau only).
    """
    Y = _as_finite(Y, "Y")
    Z = _as_finite(Z, "Z")
    if Y.ndim == 1:
        Y = Y[None, :]
    if Z.ndim != 2 or Y.shape[1] != Z.shape[0]:
        raise ValidationError(f"shape mismatch: Y {Y.shape} vs Z {Z.shape}")
    m, n = Y.shape
    d = Z.shape[1]
    if n < d:
        raise ValidationError(f"need at least as many observations ({n}) as coefficients ({d})")

    ZZ = (Z[:, :, None] * Z[:, None, :]).reshape(n, d * d)
    ridge = np.zeros(m, dtype=bool)
    if B0 is None:
        B, flag = _weighted_solve(Z, ZZ, Y, np.ones_like(Y))
        ridge |= flag
    else:
        B = _as_finite(B0, "B0").reshape(m, d).copy()

    iters = np.zeros(m, dtype=np.int64)
    done = np.zeros(m, dtype=bool)
    trace = []
    if track_objective and not cfg.adaptive:
        trace.append(np.sum(huber_loss(Y - B @ Z.T, cfg.tau), axis=1))

    for _ in range(cfg.max_irls_iters):
        act = ~done
        if not np.any(act):
            break
        Ya = Y[act]
        Ba = B[act]
        W = irls_weights(Ya - Ba @ Z.T, cfg)
        Bn, flag = _weighted_solve(Z, ZZ, Ya, W)
        if not np.all(np.isfinite(Bn)):
            raise NumericalError("IRLS produced non-finite coefficients")
        step = np.linalg.norm(Bn - Ba, axis=1)
        scale = np.maximum(np.linalg.norm(Bn, axis=1), np.finfo(float).tiny)
        B[act] = Bn
        ridge[act] |= flag
        iters[act] += 1
        idx = np.flatnonzero(act)
        done[idx[step <= cfg.irls_tol * scale]] = True
        if track_objective and not cfg.adaptive:
            trace.append(np.sum(huber_loss(Y - B @ Z.T, cfg.tau), axis=1))

    if np.any(ridge):
        logger.debug("ridge fallback engaged in %d of %d regressions", int(ridge.sum()), m)
    return IrlsResult(coef=B, iterations=iters, converged=done, ridge_used=ridge, objective_trace=trace)


def irls_regress(
    y: ArrayLike,
    Z: ArrayLike,
    beta0: ArrayLike | None,
    cfg: HuberConfig,
) -> NDArray[np.float64]:
    """Single Huber regression of ``y`` on the rows of ``Z`` started at ``beta0``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    b0 = None if beta0 is None else np.asarray(beta0, dtype=np.float64).reshape(1, -1)
    return irls_batch(y[None, :], Z, b0, cfg).coef[0]
