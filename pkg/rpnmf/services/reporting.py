from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

import duckdb
import numpy as np
import polars as pl
from pydantic import ValidationError

from rpnmf.errors import NonFiniteError, RpnmfError
from rpnmf.models import Algorithm, RunStatus
from rpnmf.schemas import ExperimentPlan, RunSummary, RunTrace, SketchConfig, SolverConfig
from rpnmf.services import solvers
from rpnmf.services.linalg import Matrix

logger = logging.getLogger(__name__)

TRACE_SCHEMA = {
    "algorithm": pl.Utf8,
    "seed": pl.Int64,
    "iteration": pl.Int64,
    "error": pl.Float64,
    "elapsed_seconds": pl.Float64,
}

RUN_SCHEMA = {
    "algorithm": pl.Utf8,
    "seed": pl.Int64,
    "k": pl.Int64,
    "q": pl.Int64,
    "w": pl.Int64,
    "alpha": pl.Float64,
    "beta": pl.Float64,
    "final_error": pl.Float64,
    "gini_b": pl.Float64,
    "flops_per_iter": pl.Int64,
    "memory_floats": pl.Int64,
    "iterations_run": pl.Int64,
    "converged": pl.Boolean,
    "median_seconds_per_update": pl.Float64,
    "status": pl.Utf8,
}

_ALGORITHM_ORDER = {algorithm.value: rank for rank, algorithm in enumerate(Algorithm)}


# --- plan expansion and execution ---------------------------------------------------


def expand_plan(plan: ExperimentPlan, shape: Tuple[int, int]) -> Tuple[List[SolverConfig], List[RunSummary]]:
    """Cartesian product of the plan's grids and seeds.

    Returns the valid solver configurations (in grid order) and one ``invalid``
    summary per combination that breaks a configuration invariant. Grids that do not
    apply to an algorithm (q and w for uncompressed solvers) collapse to one value.
    """
    configs: List[SolverConfig] = []
    invalid: List[RunSummary] = []
    seen: set[tuple] = set()
    for algorithm, k, w, q, alpha, beta, seed in itertools.product(
        plan.algorithms, plan.k_grid, plan.w_grid, plan.q_grid, plan.alpha_grid, plan.beta_grid, plan.seeds
    ):
        if algorithm.is_projected:
            q = q if q is not None else k + plan.oversampling
        else:
            q, w = None, None
        key = (algorithm, k, q, w, alpha, beta, seed)
        if key in seen:
            continue
        seen.add(key)
        try:
            if q is not None and q > min(shape):
                raise ValueError(f"q={q} exceeds min(d, n)={min(shape)}")
            configs.append(
                SolverConfig(
                    algorithm=algorithm,
                    k=k,
                    sketch=SketchConfig(q=q, w=w, seed=seed) if algorithm.is_projected else None,
                    alpha=alpha,
                    beta=beta,
                    max_iterations=plan.max_iterations,
                    rel_tolerance=plan.rel_tolerance,
                    error_interval=plan.error_interval,
                    seed=seed,
                    normalize_a=plan.normalize_a,
                )
            )
        except (ValidationError, ValueError) as exc:
            logger.warning("skipping invalid cell %s k=%s q=%s w=%s: %s", algorithm.value, k, q, w, _first_line(exc))
            invalid.append(_invalid_summary(algorithm, seed, k, q, w, alpha, beta))
    return configs, invalid


def execute_run(X: Matrix, config: SolverConfig) -> RunTrace:
    """Run one configuration; failures come back as a trace with a non-completed status."""
    try:
        _, trace = solvers.run(X, config)
    except NonFiniteError as exc:
        trace = exc.trace
    except RpnmfError as exc:
        trace = RunTrace(
            algorithm=config.algorithm,
            seed=config.seed,
            config=config,
            status=RunStatus.failed,
            message=str(exc),
        )
    if trace.status != RunStatus.completed:
        logger.warning("%s seed=%s %s: %s", config.algorithm.label, config.seed, trace.status.value, trace.message)
    else:
        logger.info("%s seed=%s completed, error=%.6g", config.algorithm.label, config.seed, trace.final_error)
    return trace


def run_plan(X: Matrix, configs: Sequence[SolverConfig], jobs: int = 1) -> List[RunTrace]:
    """Execute configurations, in parallel when ``jobs > 1``; results keep input order."""
    if jobs <= 1 or len(configs) <= 1:
        return [execute_run(X, config) for config in configs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
        return list(pool.map(partial(execute_run, X), configs))


def exit_status(summaries: Sequence[RunSummary]) -> int:
    return 0 if all(s.status == RunStatus.completed for s in summaries) else 1


# --- tidy frames ----------------------------------------------------------------------


def trace_frame(traces: Sequence[RunTrace]) -> pl.DataFrame:
    rows = [
        {
            "algorithm": trace.algorithm.value,
            "seed": trace.seed,
            "iteration": record.iteration,
            "error": record.error,
            "elapsed_seconds": record.elapsed_seconds,
        }
        for trace in traces
        for record in trace.records
    ]
    return pl.DataFrame(rows, schema=TRACE_SCHEMA)


def runs_frame(summaries: Sequence[RunSummary]) -> pl.DataFrame:
    rows = [{column: _plain(getattr(s, column)) for column in RUN_SCHEMA} for s in summaries]
    return pl.DataFrame(rows, schema=RUN_SCHEMA)


def read_trace_csv(path: Path) -> pl.DataFrame:
    frame = pl.read_csv(Path(path), schema=TRACE_SCHEMA)
    return frame


def read_runs_csv(path: Path) -> pl.DataFrame:
    return pl.read_csv(Path(path), schema=RUN_SCHEMA)


# --- seed aggregation -----------------------------------------------------------------


def comparison_table(summaries: Sequence[RunSummary]) -> pl.DataFrame:
    """Per-algorithm medians over seeds, next to the estimated cost of one update."""
    query = """
        SELECT
            algorithm,
            COUNT(*) AS runs,
            COUNT(*) FILTER (WHERE status = 'completed') AS completed,
            MAX(flops_per_iter) AS flops_per_iter,
            MAX(memory_floats) AS memory_floats,
            MEDIAN(median_seconds_per_update) FILTER (WHERE status = 'completed') AS median_seconds_per_update,
            MEDIAN(final_error) FILTER (WHERE status = 'completed') AS median_final_error,
            MEDIAN(gini_b) FILTER (WHERE status = 'completed') AS median_gini_b
        FROM runs
        GROUP BY algorithm, ordinal
        ORDER BY ordinal
    """
    return _aggregate(summaries, query)


def sweep_cells(summaries: Sequence[RunSummary]) -> pl.DataFrame:
    query = """
        SELECT
            algorithm, k, q, w, alpha, beta,
            COUNT(*) AS runs,
            COUNT(*) FILTER (WHERE status = 'completed') AS completed,
            MEDIAN(final_error) FILTER (WHERE status = 'completed') AS median_final_error,
            MEDIAN(gini_b) FILTER (WHERE status = 'completed') AS median_gini_b
        FROM runs
        GROUP BY algorithm, ordinal, k, q, w, alpha, beta
        ORDER BY ordinal, k, q NULLS FIRST, w NULLS FIRST, alpha, beta
    """
    return _aggregate(summaries, query)


def _aggregate(summaries: Sequence[RunSummary], query: str) -> pl.DataFrame:
    columns = list(RUN_SCHEMA)
    rows = [
        (*(_plain(getattr(s, column)) for column in columns), _ALGORITHM_ORDER[s.algorithm.value]) for s in summaries
    ]
    with duckdb.connect(":memory:") as con:
        con.execute(
            """
            CREATE TABLE runs (
                algorithm VARCHAR, seed BIGINT, k BIGINT, q BIGINT, w BIGINT,
                alpha DOUBLE, beta DOUBLE, final_error DOUBLE, gini_b DOUBLE,
                flops_per_iter BIGINT, memory_floats BIGINT, iterations_run BIGINT,
                converged BOOLEAN, median_seconds_per_update DOUBLE, status VARCHAR,
                ordinal INTEGER
            )
            """
        )
        if rows:
            placeholders = ", ".join("?" for _ in range(len(columns) + 1))
            con.executemany(f"INSERT INTO runs VALUES ({placeholders})", rows)
        result = con.execute(query)
        names = [desc[0] for desc in result.description]
        records = result.fetchall()
    data = {name: [_plain(row[i]) for row in records] for i, name in enumerate(names)}
    return pl.DataFrame(data, schema={name: _frame_dtype(name) for name in names})


def _frame_dtype(column: str) -> Any:
    if column in RUN_SCHEMA:
        return RUN_SCHEMA[column]
    if column in ("runs", "completed"):
        return pl.Int64
    return pl.Float64


def _invalid_summary(
    algorithm: Algorithm,
    seed: int,
    k: int,
    q: Optional[int],
    w: Optional[int],
    alpha: float,
    beta: float,
) -> RunSummary:
    return RunSummary(
        algorithm=algorithm,
        seed=seed,
        k=k,
        q=q,
        w=w,
        alpha=alpha,
        beta=beta,
        final_error=None,
        gini_b=None,
        flops_per_iter=None,
        memory_floats=None,
        iterations_run=0,
        converged=False,
        median_seconds_per_update=None,
        status=RunStatus.invalid,
    )


def _plain(value: Any) -> Any:
    if isinstance(value, (Algorithm, RunStatus)):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    return value


def _first_line(exc: Exception) -> str:
    text = str(exc)
    if isinstance(exc, ValidationError):
        return "; ".join(err["msg"] for err in exc.errors())
    return text.splitlines()[0] if text else type(exc).__name__
