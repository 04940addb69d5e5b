from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.utils.extmath import randomized_svd

from rpnmf.errors import ConfigurationError, InputDataError
from rpnmf.models import Algorithm, ProjectorSide
from rpnmf.schemas import CostEstimate, DistortionReport
from rpnmf.services.compression import ProjectorPair
from rpnmf.services.linalg import FactorPair, Matrix, frobenius_norm_sq, matmul

logger = logging.getLogger(__name__)

# leading terms per update; the projected rows scale with q = r + r_ov
_FLOP_FACTORS = {
    Algorithm.mu: 8,
    Algorithm.hals: 8,
    Algorithm.fasthals: 4,
    Algorithm.mu_rp: 4,
    Algorithm.hals_rp: 4,
    Algorithm.fasthals_rp: 2,
}


def reconstruction_error(X: Matrix, factors: FactorPair) -> float:
    A, B = factors.A, factors.B
    if X.shape != (A.shape[0], B.shape[0]):
        raise ConfigurationError(f"factors {A.shape} x {B.shape}^T do not match data {X.shape}")
    if sp.issparse(X):
        # 1/2 ||X||^2 - tr(B^T X^T A) + 1/2 tr((A^T A)(B^T B)) without a d x n temporary
        cross = float(np.sum(B * matmul(X, A, transpose_left=True)))
        gram = float(np.sum((A.T @ A) * (B.T @ B)))
        return max(0.5 * frobenius_norm_sq(X) - cross + 0.5 * gram, 0.0)
    residual = np.asarray(X) - A @ B.T
    return 0.5 * frobenius_norm_sq(residual)


def relative_error(X: Matrix, factors: FactorPair) -> float:
    norm_sq = frobenius_norm_sq(X)
    if norm_sq == 0.0:
        return 0.0
    return math.sqrt(2.0 * reconstruction_error(X, factors) / norm_sq)


def gini(B: np.ndarray) -> float:
    values = np.sort(np.asarray(B, dtype=np.float64).ravel(), kind="stable")
    if values.size and values[0] < 0:
        raise InputDataError("gini needs a non-negative matrix")
    total = float(values.sum())
    if total == 0.0:
        raise InputDataError("gini is undefined for an all-zero matrix")
    m = values.size
    ranks = np.arange(1, m + 1, dtype=np.float64)
    return float(np.dot(2.0 * ranks - m - 1.0, values) / (m * total))


def estimate_cost(algorithm: Algorithm, d: int, n: int, k: int, q: Optional[int] = None) -> CostEstimate:
    algorithm = Algorithm(algorithm)
    if min(d, n, k) <= 0:
        raise ConfigurationError(f"dimensions must be positive, got d={d}, n={n}, k={k}")
    if algorithm.is_projected:
        if q is None or q <= 0:
            raise ConfigurationError(f"{algorithm.value} cost needs a positive q")
        if algorithm == Algorithm.hals_rp:
            flops = 4 * d * n * k * q
        else:
            flops = _FLOP_FACTORS[algorithm] * d * k * q
        memory = (2 * q + k) * (d + n)
    else:
        q = None
        flops = _FLOP_FACTORS[algorithm] * d * n * k
        memory = d * n + d * k + n * k
    return CostEstimate(algorithm=algorithm, flops_per_iteration=flops, memory_floats=memory, d=d, n=n, k=k, q=q)


def memory_reduction(d: int, n: int, k: int, q: int) -> float:
    full = estimate_cost(Algorithm.fasthals, d, n, k)
    compressed = estimate_cost(Algorithm.fasthals_rp, d, n, k, q)
    return full.memory_floats / compressed.memory_floats


def pairwise_distortion(
    X: Matrix,
    projectors: ProjectorPair,
    sample_pairs: int,
    seed: int,
    side: ProjectorSide = ProjectorSide.left,
) -> DistortionReport:
    """Relative change of Euclidean distances between data points under projection.

    The left projector acts on the columns of X, the right projector on its rows.
    """
    side = ProjectorSide(side)
    if side == ProjectorSide.left:
        points = X
        projected = projectors.compress_left(X)
    else:
        points = X.T
        projected = projectors.compress_right(X).T
    count = points.shape[1]
    if count < 2:
        raise InputDataError(f"pairwise distortion needs at least 2 points, got {count}")

    first, second = _sample_pairs(count, sample_pairs, seed)
    original = _column_distances(points, first, second)
    reduced = np.linalg.norm(projected[:, first] - projected[:, second], axis=0)

    scale = float(original.max()) if original.size else 0.0
    zero = original <= 1e-14 * max(scale, 1.0)
    distortion = np.abs(reduced[~zero] - original[~zero]) / original[~zero]
    return DistortionReport(
        side=side,
        pairs=int(first.size),
        zero_distance_pairs=int(zero.sum()),
        max_relative_distortion=float(distortion.max()) if distortion.size else 0.0,
        mean_relative_distortion=float(distortion.mean()) if distortion.size else 0.0,
    )


def estimate_spectrum_decay(X: Matrix, n_values: int = 20, seed: int = 0) -> float:
    """Fit sigma_j ~ j^(-p) to the leading singular values and return p."""
    n_values = max(2, min(n_values, min(X.shape)))
    _, sigma, _ = randomized_svd(X, n_components=n_values, random_state=seed)
    sigma = sigma[sigma > sigma[0] * 1e-12] if sigma[0] > 0 else sigma[:0]
    if sigma.size < 2:
        return 0.0
    ranks = np.arange(1, sigma.size + 1, dtype=np.float64)
    slope, _ = np.polyfit(np.log(ranks), np.log(sigma), 1)
    return float(-slope)


def _sample_pairs(count: int, sample_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    total = count * (count - 1) // 2
    if sample_pairs >= total:
        return np.triu_indices(count, k=1)
    rng = np.random.default_rng(seed)
    first = rng.integers(0, count, size=sample_pairs)
    second = rng.integers(0, count - 1, size=sample_pairs)
    second = second + (second >= first)
    return first, second


def _column_distances(points: Matrix, first: np.ndarray, second: np.ndarray) -> np.ndarray:
    if sp.issparse(points):
        columns = sp.csc_matrix(points)
        diff = columns[:, first] - columns[:, second]
        return np.sqrt(np.asarray(diff.multiply(diff).sum(axis=0)).ravel())
    points = np.asarray(points)
    return np.linalg.norm(points[:, first] - points[:, second], axis=0)
