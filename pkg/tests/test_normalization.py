import numpy as np
import pytest

from robust_mfm.errors import RankDeficiencyError
from robust_mfm.normalization import normalize_fit, normalize_loadings, sorted_eigh


def _check_identified(R, C, F, tol=1e-10):
    p1, p2, T = R.shape[0], C.shape[0], F.shape[0]
    assert np.max(np.abs(R.T @ R / p1 - np.eye(R.shape[1]))) <= tol
    assert np.max(np.abs(C.T @ C / p2 - np.eye(C.shape[1]))) <= tol
    S1 = sum(F[t] @ F[t].T for t in range(T)) / T
    S2 = sum(F[t].T @ F[t] for t in range(T)) / T
    for S in (S1, S2):
        off = S - np.diag(np.diag(S))
        assert np.max(np.abs(off)) <= 1e-8 * max(1, np.max(np.abs(S)))
        assert np.all(np.diff(np.diag(S)) <= 1e-12)


def test_reconstruction_oracle(rng):
    Rt, Ct, Ft = rng.standard_normal((6, 2)), rng.standard_normal((5, 2)), rng.standard_normal((4, 2, 2))
    R, C, F, art = normalize_fit(Rt, Ct, Ft)
    for t in range(4):
        np.testing.assert_allclose(R @ F[t] @ C.T, Rt @ Ft[t] @ Ct.T, atol=1e-10)
    _check_identified(R, C, F)
    assert np.all(np.diff(art.Lambda1) <= 0) and np.all(art.Lambda1 >= -1e-12)
    np.testing.assert_allclose(art.Gamma1.T @ art.Gamma1, np.eye(2), atol=1e-10)


def test_fixed_point_up_to_signs(rng):
    R, C, F, _ = normalize_fit(rng.standard_normal((8, 3)), rng.standard_normal((7, 2)),
                               rng.standard_normal((10, 3, 2)))
    R2, C2, F2, _ = normalize_fit(R, C, F)
    np.testing.assert_allclose(np.abs(R2), np.abs(R), atol=1e-10)
    np.testing.assert_allclose(np.abs(C2), np.abs(C), atol=1e-10)
    np.testing.assert_allclose(R2, R, atol=1e-10)  # sign convention makes it exact


def test_scale_absorbed(rng):
    R, C, F, _ = normalize_fit(rng.standard_normal((8, 2)), rng.standard_normal((7, 2)),
                               rng.standard_normal((5, 2, 2)))
    R2, C2, F2, _ = normalize_fit(2 * R, C, F)
    np.testing.assert_allclose(R2.T @ R2 / 8, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(F2, 2 * F, atol=1e-10)


def test_sign_convention(rng):
    R, C, F, _ = normalize_fit(rng.standard_normal((9, 3)), rng.standard_normal((6, 2)),
                               rng.standard_normal((4, 3, 2)))
    assert np.all(R.sum(axis=0) >= 0) and np.all(C.sum(axis=0) >= 0)


def test_rank_deficient_raises():
    R = np.ones((5, 2))
    with pytest.raises(RankDeficiencyError):
        normalize_fit(R, np.eye(3)[:, :2], np.ones((2, 2, 2)))
    with pytest.raises(RankDeficiencyError):
        normalize_loadings(np.zeros((4, 1)))


def test_sorted_eigh_ties_deterministic(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    S = Q @ np.diag([2.0, 2.0, 1.0]) @ Q.T
    w, V = sorted_eigh(S)
    np.testing.assert_allclose(w, [2, 2, 1], atol=1e-12)
    w2, V2 = sorted_eigh(S + 0.0 * S)
    np.testing.assert_array_equal(V, V2)
    # the tied block does not depend on the basis the solver returns
    w3, V3 = sorted_eigh(np.diag([2.0, 2.0, 1.0]))
    np.testing.assert_allclose(V3[:, :2], np.eye(3)[:, :2], atol=1e-12)
