import math

import numpy as np
import pytest

from conftest import make_noiseless
from robust_mfm.core import MatrixSeries
from robust_mfm.errors import ValidationError
from robust_mfm.validation import kron_space_distance, rolling_validate, space_distance


def test_space_distance_fixtures():
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    assert space_distance(e1, e1) == 0
    assert space_distance(e1, e2) == 1
    assert space_distance(e1, np.array([[1.0], [1.0]]) / math.sqrt(2)) == pytest.approx(0.70711, abs=1e-5)
    with pytest.raises(ValidationError):
        space_distance(np.zeros((3, 1)), e1)


def test_space_distance_trace_oracle(rng):
    Q1, Q2 = rng.standard_normal((6, 2)), rng.standard_normal((6, 3))
    P1 = Q1 @ np.linalg.pinv(Q1)
    P2 = Q2 @ np.linalg.pinv(Q2)
    ref = math.sqrt(1 - np.trace(P1 @ P2) / 3)
    assert space_distance(Q1, Q2) == pytest.approx(ref, abs=1e-12)
    assert abs(space_distance(Q1, Q2) - space_distance(Q2, Q1)) <= 1e-12


def test_space_distance_rotation_invariance(rng):
    Q1, Q2 = rng.standard_normal((7, 3)), rng.standard_normal((7, 3))
    O = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    assert space_distance(Q1 @ O, Q2) == pytest.approx(space_distance(Q1, Q2), abs=1e-10)


def test_kron_distance_matches_explicit(rng):
    C1, R1, C2, R2 = (rng.standard_normal(s) for s in ((4, 2), (5, 1), (4, 2), (5, 1)))
    ref = space_distance(np.kron(C1, R1), np.kron(C2, R2))
    assert kron_space_distance(C1, R1, C2, R2) == pytest.approx(ref, abs=1e-12)


def test_rolling_noiseless():
    s, R, C, F = make_noiseless(36, 8, 6, 2, 2, seed=1)
    rep = rolling_validate(s, bandwidth=2, horizon=6, k1=2, k2=2, method="alpha_pca")
    assert len(rep.windows) == (36 - 12) // 6
    assert rep.mean_MSE < 1e-20 and rep.mean_rho < 1e-20
    assert rep.mean_v < 1e-6


def test_rolling_manual_window(rng):
    X = MatrixSeries(rng.standard_normal((10, 4, 3)))
    rep = rolling_validate(X, 1, 4, 1, 1, method="alpha_pca")
    from robust_mfm.baselines import alpha_pca_fit

    f = alpha_pca_fit(X.window(0, 4), 1, 1)
    Y = X.data[4:8]
    Fh = np.array([f.R.T @ y @ f.C / 12 for y in Y])
    Yh = np.array([f.R @ a @ f.C.T for a in Fh])
    sse = np.sum((Yh - Y) ** 2)
    assert rep.windows[0].MSE == pytest.approx(sse / (4 * 12), rel=1e-12)
    ybar = X.data[:4].mean(axis=0)
    assert rep.windows[0].rho == pytest.approx(sse / np.sum((Y - ybar) ** 2), rel=1e-12)
    assert len(rep.windows) == 1


def test_rolling_ls_equals_large_tau_ihr(rng):
    from robust_mfm.baselines import LS_TAU
    from robust_mfm.huber import HuberConfig
    from robust_mfm.ihr import IhrOptions

    X = MatrixSeries(rng.standard_normal((18, 5, 4)))
    opts = IhrOptions(1, 1, init="alpha_pca", huber=HuberConfig(tau=LS_TAU))
    a = rolling_validate(X, 2, 6, 1, 1, method="ls", opts=opts)
    b = rolling_validate(X, 2, 6, 1, 1, method="ihr", opts=opts)
    assert a.mean_MSE == pytest.approx(b.mean_MSE, rel=1e-12)


def test_rolling_too_short():
    with pytest.raises(ValidationError):
        rolling_validate(MatrixSeries(np.zeros((10, 3, 3))), 2, 4)
