import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from guided_rpl.exceptions import DegenerateColumn, NotPositiveDefinite, NumericError
from guided_rpl.numerics import (
    condition_number,
    cosine_similarity_matrix,
    eigen_extremes,
    frobenius_norm,
    ridge_solve,
    spd_factorize,
)


def test_ridge_identity():
    W = ridge_solve(np.eye(2), np.eye(2), 1.0)
    np.testing.assert_allclose(W, 0.5 * np.eye(2), atol=1e-15)


def test_ridge_scalar_closed_form():
    W = ridge_solve(np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]]), 0.01)
    assert W.shape == (1, 1)
    assert W[0, 0] == pytest.approx(0.990099, abs=1e-6)
    assert W[0, 0] == pytest.approx(1 / 1.01, rel=1e-14)


def test_ridge_zero_target():
    rng = np.random.default_rng(0)
    assert not ridge_solve(rng.normal(size=(7, 4)), np.zeros((7, 3)), 0.1).any()


def test_ridge_rejects_bad_lambda_and_nan():
    with pytest.raises(ValueError):
        ridge_solve(np.eye(2), np.eye(2), 0.0)
    with pytest.raises(NumericError):
        ridge_solve(np.array([[np.nan, 1.0]]), np.ones((1, 1)), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 50), st.sampled_from([1e-3, 0.01, 1.0]),
       st.integers(0, 2**31))
def test_ridge_normal_equations(N, L, C, lam, seed):
    rng = np.random.default_rng(seed)
    H, Y = rng.normal(size=(N, L)), rng.normal(size=(N, C))
    W = ridge_solve(H, Y, lam)
    lhs = (H.T @ H + lam * np.eye(L)) @ W - H.T @ Y
    assert np.linalg.norm(lhs) <= 1e-8 * (1 + np.linalg.norm(H.T @ Y))


def test_factor_identity():
    np.testing.assert_array_equal(spd_factorize(np.eye(3)).lower, np.eye(3))


def test_factor_hand_cholesky():
    L = spd_factorize(np.array([[4.0, 2.0], [2.0, 3.0]])).lower
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-15)


def test_factor_indefinite():
    with pytest.raises(NotPositiveDefinite):
        spd_factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_factor_rejects_asymmetric():
    with pytest.raises(NumericError):
        spd_factorize(np.array([[1.0, 0.5], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 6.0), st.integers(0, 2**31))
def test_factor_solve_roundtrip(n, log_cond, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = (Q * np.logspace(0, log_cond, n)) @ Q.T
    A = (A + A.T) / 2
    b = rng.normal(size=(n, 2))
    x = spd_factorize(A).solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_eigen_examples():
    assert eigen_extremes(np.eye(4)) == pytest.approx((1.0, 1.0))
    assert eigen_extremes(np.diag([0.5, 2.0, 10.0])) == pytest.approx((0.5, 10.0))
    assert eigen_extremes(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx((1.0, 3.0))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(1e-3, 1e3)))
def test_eigen_diagonal_exact(v):
    lo, hi = eigen_extremes(np.diag(v))
    assert lo == pytest.approx(v.min(), rel=1e-12)
    assert hi == pytest.approx(v.max(), rel=1e-12)


def test_eigen_large_matches_dense():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(700, 600))
    A = X.T @ X + 0.01 * np.eye(600)
    lo, hi = eigen_extremes(A)
    ref = np.linalg.eigvalsh(A)
    assert lo == pytest.approx(ref[0], rel=1e-8)
    assert hi == pytest.approx(ref[-1], rel=1e-8)


def test_condition_and_norm_identity():
    n = 5
    assert condition_number(np.eye(n)) == 1.0
    assert frobenius_norm(np.eye(n)) == pytest.approx(np.sqrt(n))


def test_condition_singular_is_inf():
    assert condition_number(np.zeros((2, 2))) == np.inf


def test_cosine_examples():
    Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(6, 3)))
    np.testing.assert_allclose(cosine_similarity_matrix(Q), np.eye(3), atol=1e-12)
    np.testing.assert_array_equal(cosine_similarity_matrix(np.array([[1.0, 1.0], [0.0, 0.0]])), np.ones((2, 2)))
    with pytest.raises(DegenerateColumn):
        cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(1, 15), st.integers(0, 2**31))
def test_cosine_properties(N, L, seed):
    C = cosine_similarity_matrix(np.random.default_rng(seed).normal(size=(N, L)))
    np.testing.assert_array_equal(C, C.T)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    assert np.all(np.abs(C) <= 1.0)
