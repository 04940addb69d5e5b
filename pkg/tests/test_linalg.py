import numpy as np
import pytest
import scipy.sparse as sp

from rpnmf.errors import ConfigurationError, DimensionMismatchError, InputDataError
from rpnmf.services.linalg import (
    FactorPair,
    as_dense,
    as_sparse,
    clamp_nonnegative,
    column,
    frobenius_norm_sq,
    matmul,
    min_entry,
    set_column,
    thin_qr,
)


def test_matmul_sparse_matches_dense(rng):
    dense = rng.uniform(size=(30, 20))
    dense[dense < 0.7] = 0.0
    sparse = sp.csr_matrix(dense)
    N = rng.standard_normal((20, 4))
    M = rng.standard_normal((30, 4))

    assert np.allclose(matmul(sparse, N), dense @ N)
    assert np.allclose(matmul(sparse, M, transpose_left=True), dense.T @ M)
    assert isinstance(matmul(sparse, N), np.ndarray)


def test_matmul_transpose_right(rng):
    M = rng.standard_normal((5, 3))
    N = rng.standard_normal((4, 3))
    assert np.allclose(matmul(M, N, transpose_right=True), M @ N.T)


def test_matmul_rejects_nonconforming_shapes(rng):
    with pytest.raises(DimensionMismatchError) as excinfo:
        matmul(rng.standard_normal((5, 3)), rng.standard_normal((4, 2)))
    assert "(5, 3)" in str(excinfo.value)
    assert "(4, 2)" in str(excinfo.value)


def test_frobenius_norm_sq_dense_and_sparse():
    dense = np.array([[1.0, 0.0], [2.0, -2.0]])
    assert frobenius_norm_sq(dense) == 9.0
    assert frobenius_norm_sq(sp.csr_matrix(dense)) == 9.0


def test_thin_qr_reconstructs_and_is_orthonormal(rng):
    M = rng.standard_normal((40, 7))
    Q, R = thin_qr(M)
    assert Q.shape == (40, 7)
    assert R.shape == (7, 7)
    assert np.allclose(Q.T @ Q, np.eye(7), atol=1e-12)
    assert np.allclose(Q @ R, M, atol=1e-12)
    assert np.allclose(R, np.triu(R))


def test_thin_qr_completes_rank_deficient_input(rng):
    v = rng.standard_normal(12)
    w = rng.standard_normal(12)
    M = np.column_stack([v, 2.0 * v, w, np.zeros(12)])
    Q, R = thin_qr(M)
    assert np.allclose(Q.T @ Q, np.eye(4), atol=1e-12)
    assert np.allclose(Q @ R, M, atol=1e-10)


def test_thin_qr_needs_tall_input(rng):
    with pytest.raises(ConfigurationError):
        thin_qr(rng.standard_normal((3, 5)))


def test_as_sparse_sums_duplicates():
    coo = sp.coo_matrix((np.array([2.0, 3.0]), (np.array([0, 0]), np.array([1, 1]))), shape=(2, 2))
    csr = as_sparse(coo)
    assert csr[0, 1] == 5.0
    assert csr.nnz == 1


def test_as_dense_rejects_non_finite():
    with pytest.raises(InputDataError):
        as_dense(np.array([[1.0, np.nan]]))
    with pytest.raises(InputDataError):
        as_sparse(sp.csr_matrix(np.array([[np.inf, 0.0]])))


def test_min_entry_counts_implicit_zeros():
    assert min_entry(sp.csr_matrix(np.array([[1.0, 0.0], [2.0, 3.0]]))) == 0.0
    assert min_entry(sp.csr_matrix(np.array([[1.0, 4.0], [2.0, 3.0]]))) == 1.0
    assert min_entry(np.array([[1.0, -0.5]])) == -0.5


def test_column_access_and_bounds(rng):
    M = rng.standard_normal((4, 3))
    assert np.array_equal(column(M, 2), M[:, 2])
    set_column(M, 0, np.ones(4))
    assert np.array_equal(M[:, 0], np.ones(4))
    with pytest.raises(IndexError):
        column(M, 3)
    with pytest.raises(IndexError):
        set_column(M, -1, np.ones(4))
    with pytest.raises(DimensionMismatchError):
        set_column(M, 1, np.ones(5))


def test_clamp_nonnegative():
    assert np.array_equal(clamp_nonnegative(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0]))


def test_factor_pair_checks_inner_dimension(rng):
    with pytest.raises(DimensionMismatchError):
        FactorPair(A=rng.uniform(size=(5, 3)), B=rng.uniform(size=(4, 2)))
    pair = FactorPair(A=rng.uniform(size=(5, 3)), B=rng.uniform(size=(4, 3)))
    assert pair.k == 3
    assert pair.is_nonnegative()
    copy = pair.copy()
    copy.A[0, 0] = -1.0
    assert pair.A[0, 0] >= 0
