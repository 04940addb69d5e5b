from __future__ import annotations

import numpy as np

from rpnmf.services.linalg import thin_qr


def random_nonnegative(seed: int, d: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(size=(d, n))


def nonnegative_low_rank(seed: int, d: int, n: int, rank: int, noise: float = 0.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(d, rank)) @ rng.uniform(size=(n, rank)).T
    if noise:
        X = np.maximum(X + rng.normal(0.0, noise, size=X.shape), 0.0)
    return X


def exact_rank(seed: int, d: int, n: int, rank: int, decay: float = 0.0) -> np.ndarray:
    """Mixed-sign matrix with prescribed singular values j^-decay."""
    rng = np.random.default_rng(seed)
    U, _ = thin_qr(rng.standard_normal((d, rank)))
    V, _ = thin_qr(rng.standard_normal((n, rank)))
    sigma = np.arange(1, rank + 1, dtype=np.float64) ** (-decay)
    return (U * sigma) @ V.T


def relative_gap(left: np.ndarray, right: np.ndarray) -> float:
    scale = max(np.linalg.norm(left), np.linalg.norm(right), 1e-300)
    return float(np.linalg.norm(left - right) / scale)
