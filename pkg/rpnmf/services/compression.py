"""Random projection operators built from a powered Gaussian range finder.

L (d x q) spans the dominant column space of X and R (q x n) the dominant row
space. Both are built once per run and stay fixed while the solver iterates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from rpnmf.errors import ConfigurationError, DimensionMismatchError
from rpnmf.schemas import SketchConfig
from rpnmf.services.linalg import DenseMatrix, Matrix, matmul, thin_qr

logger = logging.getLogger(__name__)


def gaussian_sketch(rows: int, cols: int, seed: int) -> DenseMatrix:
    if rows <= 0 or cols <= 0:
        raise ConfigurationError(f"sketch dimensions must be positive, got {rows}x{cols}")
    return np.random.default_rng(seed).standard_normal((rows, cols))


def powered_range_finder(X: Matrix, cfg: SketchConfig) -> DenseMatrix:
    d, n = X.shape
    if cfg.q > min(d, n):
        raise ConfigurationError(f"q={cfg.q} exceeds min(d, n)={min(d, n)} for a {d}x{n} matrix")

    omega = gaussian_sketch(n, cfg.q, cfg.seed)
    Q, _ = thin_qr(matmul(X, omega))
    # subspace iteration: same span as (X X^T)^w X omega without forming the power
    for _ in range(cfg.w):
        Z, _ = thin_qr(matmul(X, Q, transpose_left=True))
        Q, _ = thin_qr(matmul(X, Z))
    return Q


@dataclass(frozen=True)
class ProjectorPair:
    L: DenseMatrix
    R: DenseMatrix

    @property
    def q(self) -> int:
        return self.L.shape[1]

    def compress_left(self, X: Matrix) -> DenseMatrix:
        return self._apply_left(X, "compress_left")

    def compress_right(self, X: Matrix) -> DenseMatrix:
        if X.shape[1] != self.R.shape[1]:
            raise DimensionMismatchError("compress_right", X.shape, self.R.T.shape)
        return matmul(X, self.R, transpose_right=True)

    def compress_factor_A(self, A: DenseMatrix) -> DenseMatrix:
        return self._apply_left(A, "compress_factor_A")

    def compress_factor_B(self, B: DenseMatrix) -> DenseMatrix:
        if B.shape[0] != self.R.shape[1]:
            raise DimensionMismatchError("compress_factor_B", self.R.shape, B.shape)
        return self.R @ B

    def _apply_left(self, M: Matrix, operation: str) -> DenseMatrix:
        if M.shape[0] != self.L.shape[0]:
            raise DimensionMismatchError(operation, self.L.T.shape, M.shape)
        # (M^T L)^T keeps a sparse M on the left of the product
        return matmul(M, self.L, transpose_left=True).T.copy()


def build_projectors(X: Matrix, cfg: SketchConfig) -> ProjectorPair:
    left_cfg = cfg.model_copy(update={"seed": cfg.seed * 2})
    right_cfg = cfg.model_copy(update={"seed": cfg.seed * 2 + 1})
    L = powered_range_finder(X, left_cfg)
    R = powered_range_finder(X.T, right_cfg).T.copy()
    logger.debug("built projectors L%s R%s (w=%s, seed=%s)", L.shape, R.shape, cfg.w, cfg.seed)
    return ProjectorPair(L=L, R=R)


def compress_left(X: Matrix, projectors: ProjectorPair) -> DenseMatrix:
    return projectors.compress_left(X)


def compress_right(X: Matrix, projectors: ProjectorPair) -> DenseMatrix:
    return projectors.compress_right(X)


def compress_factor_A(A: DenseMatrix, projectors: ProjectorPair) -> DenseMatrix:
    return projectors.compress_factor_A(A)


def compress_factor_B(B: DenseMatrix, projectors: ProjectorPair) -> DenseMatrix:
    return projectors.compress_factor_B(B)
