import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedlqr.errors import DimensionMismatch, SingularMatrix
from fedlqr.numerics import is_symmetric_pd, min_eigenvalue, solve_linear, spectral_radius


def test_solve_identity_returns_rhs():
    rhs = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(solve_linear(np.eye(3), rhs), rhs)


def test_solve_diagonal():
    np.testing.assert_allclose(solve_linear(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])


def test_solve_upper_triangular_by_hand():
    np.testing.assert_allclose(solve_linear([[1.0, 1.0], [0.0, 1.0]], [3.0, 1.0]), [2.0, 1.0], atol=1e-15)


def test_solve_needs_pivoting():
    # zero leading entry forces a row swap
    x = solve_linear([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0])
    np.testing.assert_allclose(x, [3.0, 2.0])


def test_singular_raises():
    with pytest.raises(SingularMatrix):
        solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


def test_shape_errors():
    with pytest.raises(DimensionMismatch):
        solve_linear(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        solve_linear(np.eye(2), np.ones(3))
    with pytest.raises(DimensionMismatch):
        spectral_radius(np.ones((2, 3)))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        solve_linear([[np.nan, 0.0], [0.0, 1.0]], [1.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_solve_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.normal(size=(n, n)))
    V, _ = np.linalg.qr(rng.normal(size=(n, n)))
    M = U @ np.diag(np.logspace(0, rng.uniform(0, 6), n)) @ V  # condition number <= 1e6
    rhs = rng.normal(size=(n, 3))
    X = solve_linear(M, rhs)
    assert np.max(np.abs(M @ X - rhs)) <= 1e-9 * (1 + np.abs(rhs).max())


@pytest.mark.parametrize("M, expected", [
    (np.diag([-0.5, -0.5]), 0.5),
    ([[-0.5, 4040.0], [0.0, -0.5]], 0.5),
    ([[-0.5, 2020.0], [2020.0, -0.5]], 2020.5),
    ([[0.0, -1.0], [1.0, 0.0]], 1.0),  # complex pair
])
def test_spectral_radius_examples(M, expected):
    assert spectral_radius(M) == pytest.approx(expected, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 2**32 - 1))
def test_spectral_radius_homogeneous(n, c, seed):
    M = np.random.default_rng(seed).normal(size=(n, n))
    assert spectral_radius(c * M) == pytest.approx(abs(c) * spectral_radius(M), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_spectral_radius_symmetric_2x2(a, b, d):
    # closed form eigenvalues of [[a, b], [b, d]]
    mid, rad = (a + d) / 2, np.hypot((a - d) / 2, b)
    expected = max(abs(mid + rad), abs(mid - rad))
    assert spectral_radius([[a, b], [b, d]]) == pytest.approx(expected, rel=1e-8, abs=1e-12)


def test_min_eigenvalue_and_pd():
    M = np.array([[5.0, -3.0, 0.0], [-3.0, 5.0, -2.0], [0.0, -2.0, 5.0]])
    assert min_eigenvalue(M) == pytest.approx(np.linalg.eigvalsh(M)[0], rel=1e-10)
    assert is_symmetric_pd(M)
    assert not is_symmetric_pd(-M)
    assert not is_symmetric_pd([[1.0, 2.0], [0.0, 1.0]])
