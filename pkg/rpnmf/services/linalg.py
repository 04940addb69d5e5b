from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from rpnmf.config import settings
from rpnmf.errors import ConfigurationError, DimensionMismatchError, InputDataError

DenseMatrix = np.ndarray
SparseMatrix = sp.csr_matrix
Matrix = Union[np.ndarray, sp.spmatrix, sp.sparray]


@dataclass
class FactorPair:
    """X ~ A B^T with A (d x k) and B (n x k); B keeps components as contiguous columns."""

    A: DenseMatrix
    B: DenseMatrix

    def __post_init__(self) -> None:
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[1]:
            raise DimensionMismatchError("FactorPair", self.A.shape, self.B.shape)

    @property
    def k(self) -> int:
        return self.A.shape[1]

    def a(self, j: int) -> np.ndarray:
        return column(self.A, j)

    def b(self, j: int) -> np.ndarray:
        return column(self.B, j)

    def copy(self) -> "FactorPair":
        return FactorPair(A=self.A.copy(), B=self.B.copy())

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.A >= 0) and np.all(self.B >= 0))


def is_sparse(M: Matrix) -> bool:
    return sp.issparse(M)


def as_dense(M, *, name: str = "matrix") -> DenseMatrix:
    if sp.issparse(M):
        M = M.toarray()
    dense = np.ascontiguousarray(M, dtype=np.float64)
    if dense.ndim != 2:
        raise InputDataError(f"{name} must be two-dimensional, got shape {dense.shape}")
    require_finite(dense, name=name)
    return dense


def as_sparse(M, *, name: str = "matrix") -> SparseMatrix:
    csr = sp.csr_matrix(M, dtype=np.float64)
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    require_finite(csr, name=name)
    return csr


def require_finite(M: Matrix, *, name: str = "matrix") -> None:
    values = M.data if sp.issparse(M) else np.asarray(M)
    if not np.all(np.isfinite(values)):
        raise InputDataError(f"{name} contains NaN or infinite entries")


def min_entry(M: Matrix) -> float:
    if sp.issparse(M):
        if M.nnz == 0:
            return 0.0
        smallest = float(M.data.min())
        # implicit zeros take part when the pattern is not full
        return min(smallest, 0.0) if M.nnz < M.shape[0] * M.shape[1] else smallest
    return float(np.min(M)) if np.size(M) else 0.0


def matmul(
    M: Matrix,
    N: DenseMatrix,
    transpose_left: bool = False,
    transpose_right: bool = False,
) -> DenseMatrix:
    left = M.T if transpose_left else M
    right = N.T if transpose_right else N
    if left.shape[1] != right.shape[0]:
        raise DimensionMismatchError("matmul", left.shape, right.shape)
    if sp.issparse(right):
        right = right.toarray()
    # sparse @ dense stays a sparse-dense kernel and returns an ndarray
    return np.asarray(left @ right, dtype=np.float64)


def frobenius_norm_sq(M: Matrix) -> float:
    values = M.data if sp.issparse(M) else np.asarray(M, dtype=np.float64).ravel()
    return float(np.dot(values, values))


def thin_qr(M: DenseMatrix, rank_tol: Optional[float] = None) -> Tuple[DenseMatrix, DenseMatrix]:
    """Householder QR returning Q (rows x cols) with orthonormal columns and upper-triangular R.

    A column whose trailing residual falls below ``rank_tol * ||M||_F`` gets no
    reflector; its Q column is then the canonical vector e_i carried through the
    preceding reflectors, which keeps Q a full orthonormal basis of width ``cols``.
    """
    M = np.asarray(M, dtype=np.float64)
    m, n = M.shape
    if m < n:
        raise ConfigurationError(f"thin_qr needs rows >= cols, got {m}x{n}")
    tol = (settings.qr_rank_tol if rank_tol is None else rank_tol) * math.sqrt(frobenius_norm_sq(M))

    R = M.copy()
    reflectors: list[Optional[np.ndarray]] = []
    for i in range(n):
        x = R[i:, i]
        norm_x = float(np.linalg.norm(x))
        if norm_x <= tol:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0])
        v /= np.linalg.norm(v)
        R[i:, i:] -= 2.0 * np.outer(v, v @ R[i:, i:])
        reflectors.append(v)

    Q = np.eye(m, n)
    for i in range(n - 1, -1, -1):
        v = reflectors[i]
        if v is None:
            continue
        Q[i:, :] -= 2.0 * np.outer(v, v @ Q[i:, :])

    return Q, np.triu(R[:n, :])


def column(M: DenseMatrix, j: int) -> np.ndarray:
    _check_column_index(M, j)
    return M[:, j].copy()


def set_column(M: DenseMatrix, j: int, v: np.ndarray) -> DenseMatrix:
    _check_column_index(M, j)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.shape[0],):
        raise DimensionMismatchError("set_column", M.shape, v.shape)
    M[:, j] = v
    return M


def clamp_nonnegative(v: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def _check_column_index(M: DenseMatrix, j: int) -> None:
    if not 0 <= j < M.shape[1]:
        raise IndexError(f"column {j} out of range for matrix with {M.shape[1]} columns")
