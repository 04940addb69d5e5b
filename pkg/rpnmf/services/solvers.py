"""NMF solvers: MU, HALS and FastHALS, each with a random-projection variant.

All six share one outer loop (``run``): build projectors for the compressed
variants, iterate the chosen step, and evaluate the uncompressed objective
1/2 ||X - A B^T||_F^2 every ``error_interval`` updates.

Every step sweeps the A half (components in ascending order) before the B half.
Sparsity (alpha) and smoothness (beta) penalties act on B only.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from rpnmf.config import settings
from rpnmf.errors import InputDataError, NonFiniteError
from rpnmf.models import Algorithm, RunStatus
from rpnmf.schemas import RunTrace, SolverConfig, TraceRecord
from rpnmf.services.compression import ProjectorPair, build_projectors
from rpnmf.services.linalg import FactorPair, Matrix, as_dense, as_sparse, is_sparse, matmul, min_entry
from rpnmf.services.metrics import estimate_cost, gini, reconstruction_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompressedProblem:
    projectors: ProjectorPair
    X_hat: np.ndarray
    X_check: np.ndarray
    data: Matrix

    @classmethod
    def from_data(cls, X: Matrix, projectors: ProjectorPair) -> "CompressedProblem":
        return cls(
            projectors=projectors,
            X_hat=projectors.compress_left(X),
            X_check=projectors.compress_right(X),
            data=X,
        )


@dataclass
class IterationState:
    factors: FactorPair
    projected_A: Optional[np.ndarray] = None
    projected_B: Optional[np.ndarray] = None
    iteration: int = 0
    last_error: float = math.nan

    @classmethod
    def start(cls, factors: FactorPair, projectors: Optional[ProjectorPair] = None) -> "IterationState":
        if projectors is None:
            return cls(factors=factors)
        return cls(
            factors=factors,
            projected_A=projectors.compress_factor_A(factors.A),
            projected_B=projectors.compress_factor_B(factors.B),
        )


class ComponentReviver:
    """Reinitialises dead components from the run's seeded generator."""

    def __init__(self, seed: int, *, scale: Optional[float] = None, tol: Optional[float] = None) -> None:
        self._rng = np.random.default_rng([seed, 1])
        self.scale = settings.reinit_scale if scale is None else scale
        self.tol = settings.dead_component_tol if tol is None else tol
        self.count = 0

    def is_dead(self, denominator: float) -> bool:
        return not denominator >= self.tol

    def revive(self, M: np.ndarray, j: int) -> None:
        M[:, j] = self._rng.uniform(size=M.shape[0]) * self.scale
        self.count += 1
        logger.debug("reinitialised component %s (%s so far)", j, self.count)


def initialize(d: int, n: int, k: int, seed: int) -> FactorPair:
    if min(d, n, k) < 1:
        raise InputDataError(f"factor dimensions must be positive, got d={d}, n={n}, k={k}")
    rng = np.random.default_rng(seed)
    low = np.finfo(np.float64).tiny
    A = rng.uniform(low, 1.0, size=(d, k))
    B = rng.uniform(low, 1.0, size=(n, k))
    return FactorPair(A=A, B=B)


# --- multiplicative updates -------------------------------------------------------


def mu_step(
    X: Matrix,
    factors: FactorPair,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    eps: Optional[float] = None,
) -> FactorPair:
    eps = settings.eps if eps is None else eps
    A = factors.A.copy()
    B = factors.B.copy()

    A *= matmul(X, B) / (A @ (B.T @ B) + eps)

    denominator = B @ (A.T @ A) + eps
    denominator = _penalise_mu_denominator(denominator, B, alpha, beta)
    B *= matmul(X, A, transpose_left=True) / denominator
    return FactorPair(A=A, B=B)


def mu_rp_step(
    problem: CompressedProblem,
    state: IterationState,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    eps: Optional[float] = None,
) -> IterationState:
    """Semi-NMF multiplicative updates against the left- and right-projected data."""
    eps = settings.eps if eps is None else eps
    projectors = problem.projectors
    A = state.factors.A.copy()
    B = state.factors.B.copy()

    B_check = state.projected_B
    H = problem.X_check @ B_check
    G = B_check.T @ B_check
    A *= np.sqrt((_positive(H) + A @ _negative(G)) / (_negative(H) + A @ _positive(G) + eps))
    A_hat = projectors.compress_factor_A(A)

    P = problem.X_hat.T @ A_hat
    W = A_hat.T @ A_hat
    denominator = _negative(P) + B @ _positive(W) + eps
    denominator = _penalise_mu_denominator(denominator, B, alpha, beta)
    B *= np.sqrt((_positive(P) + B @ _negative(W)) / denominator)

    return IterationState(
        factors=FactorPair(A=A, B=B),
        projected_A=A_hat,
        projected_B=projectors.compress_factor_B(B),
        iteration=state.iteration + 1,
        last_error=state.last_error,
    )


# --- hierarchical alternating least squares -----------------------------------------


def hals_step(
    X: Matrix,
    factors: FactorPair,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    reviver: Optional[ComponentReviver] = None,
) -> FactorPair:
    """One HALS sweep; X_j is applied through X b_j - A (B^T b_j) + a_j (b_j^T b_j)."""
    reviver = reviver or ComponentReviver(0)
    A = factors.A.copy()
    B = factors.B.copy()

    for j in range(A.shape[1]):
        bb = float(B[:, j] @ B[:, j])
        if reviver.is_dead(bb):
            reviver.revive(B, j)
            bb = float(B[:, j] @ B[:, j])
        b = B[:, j]
        residual = _matvec(X, b) - A @ (B.T @ b) + A[:, j] * bb
        A[:, j] = np.maximum(residual / bb, 0.0)

    for j in range(B.shape[1]):
        aa = float(A[:, j] @ A[:, j])
        if reviver.is_dead(aa):
            reviver.revive(A, j)
            aa = float(A[:, j] @ A[:, j])
        a = A[:, j]
        residual = _matvec(X, a, transpose=True) - B @ (A.T @ a) + B[:, j] * aa
        B[:, j] = constrained_b_update(Algorithm.hals, alpha=alpha, beta=beta, numerator=residual, denominator=aa)

    return FactorPair(A=A, B=B)


def hals_rp_step(
    problem: CompressedProblem,
    state: IterationState,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    reviver: Optional[ComponentReviver] = None,
) -> IterationState:
    """One HALS-RP sweep.

    Each component works on its own projected residual, X_j R^T for the A half and
    L^T X_j for the B half, with X_j = X - A B^T + a_j b_j^T. The data term is
    projected once per component, so a sweep costs k random projection steps per
    half on top of the small q-sized products.
    """
    reviver = reviver or ComponentReviver(0)
    projectors = problem.projectors
    L, R = projectors.L, projectors.R
    A = state.factors.A.copy()
    B = state.factors.B.copy()
    A_hat = state.projected_A.copy()
    B_check = state.projected_B.copy()

    for j in range(A.shape[1]):
        b_check = R @ B[:, j]
        bb = float(b_check @ b_check)
        if reviver.is_dead(bb):
            reviver.revive(B, j)
            b_check = R @ B[:, j]
            bb = float(b_check @ b_check)
        B_check[:, j] = b_check
        # X_j R^T is projected afresh for every component; problem.X_check is not reused here
        X_check_j = projectors.compress_right(problem.data) - A @ B_check.T + np.outer(A[:, j], b_check)
        A[:, j] = np.maximum(X_check_j @ b_check / bb, 0.0)
        A_hat[:, j] = L.T @ A[:, j]

    for j in range(B.shape[1]):
        a_hat = A_hat[:, j]
        aa = float(a_hat @ a_hat)
        if reviver.is_dead(aa):
            reviver.revive(A, j)
            A_hat[:, j] = L.T @ A[:, j]
            a_hat = A_hat[:, j]
            aa = float(a_hat @ a_hat)
        # likewise L^T X_j per component
        X_hat_j = projectors.compress_left(problem.data) - A_hat @ B.T + np.outer(a_hat, B[:, j])
        B[:, j] = constrained_b_update(
            Algorithm.hals_rp, alpha=alpha, beta=beta, numerator=X_hat_j.T @ a_hat, denominator=aa
        )
        B_check[:, j] = R @ B[:, j]

    return IterationState(
        factors=FactorPair(A=A, B=B),
        projected_A=A_hat,
        projected_B=B_check,
        iteration=state.iteration + 1,
        last_error=state.last_error,
    )


def fasthals_step(
    X: Matrix,
    factors: FactorPair,
    normalize_a: bool = True,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    reviver: Optional[ComponentReviver] = None,
) -> FactorPair:
    reviver = reviver or ComponentReviver(0)
    A = factors.A.copy()
    B = factors.B.copy()

    P = matmul(X, B)
    G = B.T @ B
    for j in range(A.shape[1]):
        if reviver.is_dead(G[j, j]):
            reviver.revive(B, j)
            P[:, j] = _matvec(X, B[:, j])
            _refresh_gram(G, B, j)
        A[:, j] = np.maximum(A[:, j] + (P[:, j] - A @ G[:, j]) / G[j, j], 0.0)
        if normalize_a:
            _normalize_column(A, j)

    P = matmul(X, A, transpose_left=True)
    W = A.T @ A
    for j in range(B.shape[1]):
        if reviver.is_dead(W[j, j]):
            reviver.revive(A, j)
            P[:, j] = _matvec(X, A[:, j], transpose=True)
            _refresh_gram(W, A, j)
        B[:, j] = constrained_b_update(
            Algorithm.fasthals, alpha=alpha, beta=beta, b=B[:, j], diagonal=W[j, j], cross=P[:, j], coupled=B @ W[:, j]
        )

    return FactorPair(A=A, B=B)


def fasthals_rp_step(
    problem: CompressedProblem,
    state: IterationState,
    normalize_a: bool = True,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    reviver: Optional[ComponentReviver] = None,
) -> IterationState:
    reviver = reviver or ComponentReviver(0)
    projectors = problem.projectors
    L, R = projectors.L, projectors.R
    A = state.factors.A.copy()
    B = state.factors.B.copy()
    B_check = state.projected_B.copy()

    H = problem.X_check @ B_check
    G = B_check.T @ B_check
    for j in range(A.shape[1]):
        if reviver.is_dead(G[j, j]):
            reviver.revive(B, j)
            B_check[:, j] = R @ B[:, j]
            H[:, j] = problem.X_check @ B_check[:, j]
            _refresh_gram(G, B_check, j)
        A[:, j] = np.maximum(A[:, j] + (H[:, j] - A @ G[:, j]) / G[j, j], 0.0)
        if normalize_a:
            _normalize_column(A, j)

    A_hat = projectors.compress_factor_A(A)
    P = problem.X_hat.T @ A_hat
    W = A_hat.T @ A_hat
    for j in range(B.shape[1]):
        if reviver.is_dead(W[j, j]):
            reviver.revive(A, j)
            A_hat[:, j] = L.T @ A[:, j]
            P[:, j] = problem.X_hat.T @ A_hat[:, j]
            _refresh_gram(W, A_hat, j)
        B[:, j] = constrained_b_update(
            Algorithm.fasthals_rp, alpha=alpha, beta=beta, b=B[:, j], diagonal=W[j, j], cross=P[:, j], coupled=B @ W[:, j]
        )

    return IterationState(
        factors=FactorPair(A=A, B=B),
        projected_A=A_hat,
        projected_B=projectors.compress_factor_B(B),
        iteration=state.iteration + 1,
        last_error=state.last_error,
    )


def constrained_b_update(
    variant: Algorithm,
    *,
    alpha: float = 0.0,
    beta: float = 0.0,
    numerator: Optional[np.ndarray] = None,
    denominator: Optional[float] = None,
    b: Optional[np.ndarray] = None,
    diagonal: Optional[float] = None,
    cross: Optional[np.ndarray] = None,
    coupled: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Penalised update of one B column.

    HALS form takes ``numerator`` = X_j^T a_j and ``denominator`` = a_j^T a_j.
    FastHALS form takes ``b`` = b_j, ``diagonal`` = W_jj, ``cross`` = P_j and
    ``coupled`` = B W_j. With alpha = beta = 0 both are the plain updates.
    """
    variant = Algorithm(variant)
    unconstrained = alpha == 0.0 and beta == 0.0
    if variant in (Algorithm.hals, Algorithm.hals_rp):
        if unconstrained:
            return np.maximum(numerator / denominator, 0.0)
        return np.maximum(numerator - alpha, 0.0) / (denominator + beta)
    if variant in (Algorithm.fasthals, Algorithm.fasthals_rp):
        if unconstrained:
            return np.maximum(b + (cross - coupled) / diagonal, 0.0)
        return np.maximum((b * diagonal + cross - coupled - alpha) / (diagonal + beta), 0.0)
    raise ValueError(f"no constrained column update for {variant.value}")


# --- outer loop ---------------------------------------------------------------------


def run(
    X: Matrix,
    config: SolverConfig,
    *,
    projectors: Optional[ProjectorPair] = None,
    initial: Optional[FactorPair] = None,
) -> Tuple[FactorPair, RunTrace]:
    X = _validate_data(X)
    d, n = X.shape
    algorithm = config.algorithm
    trace = RunTrace(
        algorithm=algorithm,
        seed=config.seed,
        config=config,
        estimate=estimate_cost(algorithm, d, n, config.k, config.q),
    )

    factors = initial.copy() if initial is not None else initialize(d, n, config.k, config.seed)
    if factors.A.shape != (d, config.k) or factors.B.shape != (n, config.k):
        raise InputDataError(f"initial factors {factors.A.shape}, {factors.B.shape} do not fit data {X.shape}, k={config.k}")

    problem: Optional[CompressedProblem] = None
    if algorithm.is_projected:
        projectors = projectors or build_projectors(X, config.sketch)
        problem = CompressedProblem.from_data(X, projectors)
    state = IterationState.start(factors, problem.projectors if problem else None)
    reviver = ComponentReviver(config.seed)
    advance = _stepper(config, X, problem, reviver)

    logger.info("running %s k=%s q=%s w=%s on %sx%s", algorithm.label, config.k, config.q, config.w, d, n)
    state.last_error = _checkpoint(X, state, trace, elapsed=0.0)
    previous = state.last_error
    elapsed = 0.0
    for iteration in range(1, config.max_iterations + 1):
        started = time.perf_counter()
        state = advance(state)
        spent = time.perf_counter() - started
        elapsed += spent
        trace.update_seconds.append(spent)
        trace.iterations_run = iteration

        if iteration % config.error_interval and iteration != config.max_iterations:
            continue
        state.last_error = _checkpoint(X, state, trace, elapsed=elapsed)
        if previous == 0.0 or abs(previous - state.last_error) / previous < config.rel_tolerance:
            trace.converged = True
            break
        previous = state.last_error

    trace.reinitializations = reviver.count
    trace.gini_b = gini(state.factors.B) if np.any(state.factors.B > 0) else None
    logger.info(
        "%s finished after %s iterations, error=%.6g, converged=%s",
        algorithm.label,
        trace.iterations_run,
        trace.final_error,
        trace.converged,
    )
    return state.factors, trace


def _stepper(
    config: SolverConfig,
    X: Matrix,
    problem: Optional[CompressedProblem],
    reviver: ComponentReviver,
) -> Callable[[IterationState], IterationState]:
    alpha, beta, normalize = config.alpha, config.beta, config.normalize
    algorithm = config.algorithm

    def uncompressed(step: Callable[[FactorPair], FactorPair]) -> Callable[[IterationState], IterationState]:
        def advance(state: IterationState) -> IterationState:
            return replace(state, factors=step(state.factors), iteration=state.iteration + 1)

        return advance

    if algorithm == Algorithm.mu:
        return uncompressed(lambda f: mu_step(X, f, alpha=alpha, beta=beta))
    if algorithm == Algorithm.hals:
        return uncompressed(lambda f: hals_step(X, f, alpha=alpha, beta=beta, reviver=reviver))
    if algorithm == Algorithm.fasthals:
        return uncompressed(lambda f: fasthals_step(X, f, normalize, alpha=alpha, beta=beta, reviver=reviver))
    if algorithm == Algorithm.mu_rp:
        return lambda s: mu_rp_step(problem, s, alpha=alpha, beta=beta)
    if algorithm == Algorithm.hals_rp:
        return lambda s: hals_rp_step(problem, s, alpha=alpha, beta=beta, reviver=reviver)
    return lambda s: fasthals_rp_step(problem, s, normalize, alpha=alpha, beta=beta, reviver=reviver)


def _checkpoint(X: Matrix, state: IterationState, trace: RunTrace, *, elapsed: float) -> float:
    error = reconstruction_error(X, state.factors)
    if not math.isfinite(error):
        trace.status = RunStatus.diverged
        trace.message = f"non-finite objective at iteration {state.iteration}"
        logger.error("%s: %s", trace.algorithm.label, trace.message)
        raise NonFiniteError(trace.message, trace)
    trace.records.append(TraceRecord(iteration=state.iteration, error=error, elapsed_seconds=elapsed))
    logger.debug("iteration %s error %.6g", state.iteration, error)
    return error


def _validate_data(X: Matrix) -> Matrix:
    X = as_sparse(X, name="data") if is_sparse(X) else as_dense(X, name="data")
    if min_entry(X) < 0:
        raise InputDataError("data contains negative entries; NMF needs non-negative input")
    return X


def _matvec(X: Matrix, v: np.ndarray, transpose: bool = False) -> np.ndarray:
    return matmul(X, v[:, np.newaxis], transpose_left=transpose)[:, 0]


def _refresh_gram(G: np.ndarray, M: np.ndarray, j: int) -> None:
    g = M.T @ M[:, j]
    G[:, j] = g
    G[j, :] = g


def _normalize_column(M: np.ndarray, j: int) -> None:
    norm = float(np.linalg.norm(M[:, j]))
    if norm > 0.0:
        M[:, j] /= norm


def _penalise_mu_denominator(denominator: np.ndarray, B: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    if alpha > 0:
        denominator = denominator + alpha
    if beta > 0:
        denominator = denominator + beta * B
    return denominator


def _positive(M: np.ndarray) -> np.ndarray:
    return (np.abs(M) + M) / 2.0


def _negative(M: np.ndarray) -> np.ndarray:
    return (np.abs(M) - M) / 2.0
