"""Robust estimation of matrix factor models by Iterative Huber Regression."""

__version__ = "0.1.0"

from .baselines import alpha_pca_fit, ls_alternating_fit
from .core import FactorFit, MatrixSeries, SignMatrix, common_components, evaluate_objective, sign_align
from .errors import (MFMError, NonConvergenceError, NumericalError, RankDeficiencyError,
                     SingularCovarianceError, ValidationError)
from .huber import HuberConfig, huber_grad, huber_loss, irls_regress
from .ihr import IhrOptions, fit
from .inference import InferenceReport, infer, loading_confidence_interval, select_tau
from .normalization import normalize_fit
from .ranks import RankSelection, estimate_ranks, select_er, select_rm
from .simulation import DgpParams, generate
from .validation import RollingReport, rolling_validate, space_distance

__all__ = [
    "__version__",
    "MatrixSeries", "FactorFit", "SignMatrix", "common_components", "sign_align", "evaluate_objective",
    "MFMError", "ValidationError", "NumericalError", "RankDeficiencyError", "SingularCovarianceError",
    "NonConvergenceError",
    "HuberConfig", "huber_loss", "huber_grad", "irls_regress",
    "IhrOptions", "fit", "normalize_fit",
    "alpha_pca_fit", "ls_alternating_fit",
    "RankSelection", "select_rm", "select_er", "estimate_ranks",
    "InferenceReport", "select_tau", "loading_confidence_interval", "infer",
    "DgpParams", "generate",
    "RollingReport", "rolling_validate", "space_distance",
]
