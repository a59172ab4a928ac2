import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robust_mfm.core import FactorFit
from robust_mfm.huber import huber_curvature, huber_grad, huber_grad_sq, huber_loss
from robust_mfm.io import parse_long_csv, long_csv_text, parse_tensor, tensor_bytes
from robust_mfm.core import MatrixSeries
from robust_mfm.normalization import normalize_fit
from robust_mfm.validation import space_distance

finite = st.floats(-1e6, 1e6, allow_nan=False)
taus = st.floats(1e-3, 1e3)


@given(finite, taus)
def test_huber_pointwise(x, tau):
    L = float(huber_loss(x, tau))
    assert 0 <= L <= x * x + 1e-9 * abs(x * x)
    assert abs(float(huber_grad(x, tau))) <= tau
    assert float(huber_grad_sq(x, tau)) == min(x * x, tau * tau)
    assert float(huber_curvature(x, tau)) == (1.0 if abs(x) <= tau else 0.0)
    assert float(huber_loss(-x, tau)) == L


@given(finite, finite, taus)
def test_huber_convex_lipschitz(a, b, tau):
    la, lb, lm = (float(huber_loss(v, tau)) for v in (a, b, (a + b) / 2))
    assert lm <= (la + lb) / 2 + 1e-9 * (1 + abs(la) + abs(lb))
    assert abs(la - lb) <= tau * abs(a - b) * (1 + 1e-12) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(3, 7), st.integers(3, 7))
def test_normalization_invariants(seed, T, p1, p2):
    rng = np.random.default_rng(seed)
    k1, k2 = 2, 1
    R = rng.standard_normal((p1, k1))
    C = rng.standard_normal((p2, k2))
    F = rng.standard_normal((T, k1, k2))
    Rn, Cn, Fn, _ = normalize_fit(R, C, F, strict=False)
    fit = FactorFit(Rn, Cn, Fn)
    np.testing.assert_allclose(fit.common_components(), FactorFit(R, C, F, normalized=False).common_components(),
                               atol=1e-9 * (1 + np.abs(F).max() * np.abs(R).max() * np.abs(C).max()))
    np.testing.assert_allclose(Rn.T @ Rn / p1, np.eye(k1), atol=1e-9)
    assert np.all(Rn.sum(axis=0) >= -1e-9)
    assert space_distance(Rn, R) < 1e-6
    # normalization is idempotent
    R2, C2, F2, _ = normalize_fit(Rn, Cn, Fn, strict=False)
    np.testing.assert_allclose(R2, Rn, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_io_roundtrips(X):
    s = MatrixSeries(X)
    assert parse_tensor(tensor_bytes(s)).data.tobytes() == s.data.tobytes()
    np.testing.assert_array_equal(parse_long_csv(long_csv_text(s)).data, s.data)
