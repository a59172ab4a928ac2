import numpy as np
import pytest

from conftest import make_noiseless
from robust_mfm.baselines import LS_TAU, alpha_pca_fit, ls_alternating_fit, second_moment_matrices
from robust_mfm.core import MatrixSeries
from robust_mfm.huber import HuberConfig
from robust_mfm.ihr import IhrOptions, fit
from robust_mfm.validation import space_distance


def test_second_moments_loop(rng):
    X = rng.standard_normal((3, 4, 2))
    M_R, M_C = second_moment_matrices(MatrixSeries(X))
    ref = sum(X[t] @ X[t].T for t in range(3)) / 24
    np.testing.assert_allclose(M_R, ref, atol=1e-14)
    np.testing.assert_allclose(M_C, sum(X[t].T @ X[t] for t in range(3)) / 24, atol=1e-14)


def test_alpha_pca_noiseless():
    s, R, C, F = make_noiseless(12, 15, 10, 3, 2, seed=2)
    f = alpha_pca_fit(s, 3, 2)
    assert space_distance(f.R, R) <= 1e-6 and space_distance(f.C, C) <= 1e-6
    assert f.identification_error() <= 1e-8


def test_ls_noiseless():
    s, R, C, F = make_noiseless(12, 15, 10, 3, 2, seed=3)
    f = ls_alternating_fit(s, 3, 2)
    np.testing.assert_allclose(f.common_components(), s.data, atol=1e-8)


def test_ls_equals_large_tau_ihr(rng):
    X = MatrixSeries(rng.standard_normal((8, 9, 7)))
    opts = IhrOptions(2, 2, init="alpha_pca", huber=HuberConfig(tau=LS_TAU))
    a = ls_alternating_fit(X, 2, 2)
    b = fit(X, opts)
    np.testing.assert_allclose(a.R, b.R, atol=1e-10)
    np.testing.assert_allclose(a.F, b.F, atol=1e-10)
    assert a.diagnostics["method"] == "ls"
