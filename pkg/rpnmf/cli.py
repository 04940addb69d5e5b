from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence

from pydantic import ValidationError

from rpnmf.config import load_key_value_file, settings
from rpnmf.errors import ConfigurationError, NonFiniteError, RpnmfError
from rpnmf.models import Algorithm, DatasetFormat, ProjectorSide
from rpnmf.schemas import (
    DatasetDescriptor,
    EstimateReport,
    ExperimentPlan,
    ProjectionReport,
    RunSummary,
    SketchConfig,
    SolverConfig,
    SyntheticSpec,
)
from rpnmf.services import datasets, reporting, solvers
from rpnmf.services.compression import build_projectors
from rpnmf.services.metrics import estimate_cost, estimate_spectrum_decay, memory_reduction, pairwise_distortion
from rpnmf.storage import atomic_path, write_frame, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_USAGE = 2

BOOLEAN_FLAGS = {"header", "one_per_line", "no_normalize"}
ALGORITHM_CHOICES = [algorithm.value for algorithm in Algorithm]


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.replace(",", " ").split()]


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.replace(",", " ").split()]


def _algorithm_list(text: str) -> List[str]:
    values = [part.strip().lower() for part in text.replace(",", " ").split()]
    if values == ["all"]:
        return list(ALGORITHM_CHOICES)
    unknown = [value for value in values if value not in ALGORITHM_CHOICES]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s): {', '.join(unknown)}")
    return values


def _flatten(values: Optional[Sequence[Any]]) -> Optional[List[Any]]:
    if values is None:
        return None
    flat: List[Any] = []
    for value in values:
        flat.extend(value if isinstance(value, list) else [value])
    return flat


def _truthy(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in {"1", "true", "yes", "on"}


# --- parser -------------------------------------------------------------------------


def _dataset_arguments() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("dataset")
    group.add_argument("--input", type=Path, help="Input file or directory")
    group.add_argument(
        "--format",
        choices=[fmt.value for fmt in DatasetFormat],
        default=DatasetFormat.csv.value,
        help="Input format",
    )
    group.add_argument("--header", action="store_true", help="Dense CSV input has a header row")
    group.add_argument("--vocab-size", type=int, default=1000, help="Corpus vocabulary size")
    group.add_argument("--max-docs", type=int, default=5000, help="Corpus documents considered")
    group.add_argument("--one-per-line", action="store_true", help="Corpus is one file with one document per line")
    group.add_argument("--synthetic-d", type=int, default=200, help="Synthetic rows")
    group.add_argument("--synthetic-n", type=int, default=100, help="Synthetic columns")
    group.add_argument("--synthetic-rank", type=int, default=10, help="Synthetic true rank")
    group.add_argument("--synthetic-decay", type=float, default=0.0, help="Synthetic spectrum decay p")
    group.add_argument("--synthetic-noise", type=float, default=0.0, help="Synthetic noise level")
    group.add_argument("--synthetic-seed", type=int, default=0, help="Synthetic generator seed")
    return parent


def _run_arguments() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("iteration")
    group.add_argument("--iters", type=int, default=settings.default_max_iterations, help="Maximum iterations")
    group.add_argument("--tol", type=float, default=settings.default_rel_tolerance, help="Relative error tolerance")
    group.add_argument(
        "--error-interval",
        type=int,
        default=settings.default_error_interval,
        help="Evaluate the error every this many updates",
    )
    group.add_argument("--oversample", type=int, default=settings.default_oversampling, help="q = k + oversample when --q is absent")
    group.add_argument("--no-normalize", action="store_true", help="Do not normalise A columns in FastHALS variants")
    group.add_argument("--out", type=Path, default=settings.output_dir, help="Output directory")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.app_name, description="Compressed non-negative matrix factorization")
    parser.add_argument("--config", type=Path, help="KEY=value file with flag defaults")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    data, run = _dataset_arguments(), _run_arguments()

    factorize = subparsers.add_parser("factorize", parents=[data, run], help="Run one factorization")
    factorize.add_argument("--algo", choices=ALGORITHM_CHOICES, required=True)
    factorize.add_argument("--k", type=int, required=True)
    factorize.add_argument("--q", type=int)
    factorize.add_argument("--w", type=int, default=settings.default_power_iterations)
    factorize.add_argument("--alpha", type=float, default=0.0)
    factorize.add_argument("--beta", type=float, default=0.0)
    factorize.add_argument("--seed", type=int, default=settings.default_seeds[0])
    factorize.set_defaults(handler=cmd_factorize)

    compare = subparsers.add_parser("compare", parents=[data, run], help="Run several algorithms across seeds")
    compare.add_argument("--algo", type=_algorithm_list, nargs="+", default=list(ALGORITHM_CHOICES))
    compare.add_argument("--k", type=int, required=True)
    compare.add_argument("--q", type=int)
    compare.add_argument("--w", type=int, default=settings.default_power_iterations)
    compare.add_argument("--alpha", type=float, default=0.0)
    compare.add_argument("--beta", type=float, default=0.0)
    compare.add_argument("--seeds", type=_int_list, nargs="+", default=list(settings.default_seeds))
    compare.add_argument("--jobs", type=int, default=settings.default_jobs)
    compare.set_defaults(handler=cmd_compare)

    sweep = subparsers.add_parser("sweep", parents=[data, run], help="Grid over k, q, w, alpha and beta")
    sweep.add_argument("--algo", type=_algorithm_list, nargs="+", default=[Algorithm.fasthals_rp.value])
    sweep.add_argument("--k", type=_int_list, nargs="+", required=True)
    sweep.add_argument("--q", type=_int_list, nargs="+")
    sweep.add_argument("--w", type=_int_list, nargs="+")
    sweep.add_argument("--alpha", type=_float_list, nargs="+")
    sweep.add_argument("--beta", type=_float_list, nargs="+")
    sweep.add_argument("--seeds", type=_int_list, nargs="+", default=list(settings.default_seeds))
    sweep.add_argument("--jobs", type=int, default=settings.default_jobs)
    sweep.set_defaults(handler=cmd_sweep)

    project = subparsers.add_parser("project", parents=[data], help="Write the compressed matrices")
    project.add_argument("--q", type=int, required=True)
    project.add_argument("--w", type=int, default=settings.default_power_iterations)
    project.add_argument("--seed", type=int, default=settings.default_seeds[0])
    project.add_argument("--pairs", type=int, default=2000, help="Pairs sampled per side for the distortion report")
    project.add_argument("--output-format", choices=["csv", "mm"], default="csv")
    project.add_argument("--out", type=Path, default=settings.output_dir)
    project.set_defaults(handler=cmd_project)

    estimate = subparsers.add_parser("estimate", help="Print cost estimates for given dimensions")
    estimate.add_argument("--algo", choices=ALGORITHM_CHOICES + ["all"], default="all")
    estimate.add_argument("--d", type=int, required=True)
    estimate.add_argument("--n", type=int, required=True)
    estimate.add_argument("--k", type=int, required=True)
    estimate.add_argument("--q", type=int)
    estimate.add_argument("--oversample", type=int, default=settings.default_oversampling)
    estimate.set_defaults(handler=cmd_estimate)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, path: Path) -> None:
    if not path.is_file():
        raise ConfigurationError(f"{path}: config file not found")
    values = load_key_value_file(path)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    known = {action.dest for sub in subparsers.choices.values() for action in sub._actions}
    known.add("log_level")
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {', '.join(unknown)}")
    level = values.pop("log_level", None)
    if level:
        logging.getLogger().setLevel(level.upper())
    for key in BOOLEAN_FLAGS & set(values):
        values[key] = _truthy(values[key])
    for sub in subparsers.choices.values():
        own = {action.dest for action in sub._actions}
        sub.set_defaults(**{key: value for key, value in values.items() if key in own})
        # a config value satisfies a required flag
        for action in sub._actions:
            if action.dest in values:
                action.required = False


# --- shared helpers -----------------------------------------------------------------


def _descriptor(args: argparse.Namespace) -> DatasetDescriptor:
    fmt = DatasetFormat(args.format)
    synthetic = None
    if fmt == DatasetFormat.synthetic:
        synthetic = SyntheticSpec(
            d=args.synthetic_d,
            n=args.synthetic_n,
            true_rank=args.synthetic_rank,
            spectrum_decay=args.synthetic_decay,
            noise_level=args.synthetic_noise,
            seed=args.synthetic_seed,
        )
    name = str(args.input) if args.input else "synthetic"
    return DatasetDescriptor(
        name=name,
        format=fmt,
        path=args.input,
        has_header=_truthy(args.header),
        one_per_line=_truthy(args.one_per_line),
        vocab_size=args.vocab_size,
        max_docs=args.max_docs,
        synthetic=synthetic,
    )


def _q_for(args: argparse.Namespace, k: int) -> int:
    return args.q if args.q is not None else k + args.oversample


def _normalize(args: argparse.Namespace) -> Optional[bool]:
    return False if _truthy(args.no_normalize) else None


def _plan(args: argparse.Namespace, descriptor: DatasetDescriptor, **grids: Any) -> ExperimentPlan:
    return ExperimentPlan(
        dataset=descriptor,
        seeds=_flatten(args.seeds),
        max_iterations=args.iters,
        error_interval=args.error_interval,
        rel_tolerance=args.tol,
        oversampling=args.oversample,
        normalize_a=_normalize(args),
        output_dir=args.out,
        jobs=args.jobs,
        **grids,
    )


def _execute(plan: ExperimentPlan, X) -> tuple[list, list[RunSummary]]:
    configs, invalid = reporting.expand_plan(plan, X.shape)
    traces = reporting.run_plan(X, configs, jobs=min(plan.jobs, settings.max_jobs))
    summaries = [RunSummary.from_trace(trace) for trace in traces] + invalid
    return traces, summaries


# --- subcommands --------------------------------------------------------------------


def cmd_factorize(args: argparse.Namespace) -> int:
    algorithm = Algorithm(args.algo)
    config = SolverConfig(
        algorithm=algorithm,
        k=args.k,
        sketch=SketchConfig(q=_q_for(args, args.k), w=args.w, seed=args.seed) if algorithm.is_projected else None,
        alpha=args.alpha,
        beta=args.beta,
        max_iterations=args.iters,
        rel_tolerance=args.tol,
        error_interval=args.error_interval,
        seed=args.seed,
        normalize_a=_normalize(args),
    )
    X = datasets.load_dataset(_descriptor(args))
    out = Path(args.out)

    status = EXIT_OK
    factors = None
    try:
        factors, trace = solvers.run(X, config)
    except NonFiniteError as exc:
        trace = exc.trace
        status = EXIT_RUN_FAILED
        print(f"error: {exc}", file=sys.stderr)

    if factors is not None:
        with atomic_path(out / "A.csv") as tmp:
            datasets.save_dense_csv(factors.A, tmp)
        with atomic_path(out / "B.csv") as tmp:
            datasets.save_dense_csv(factors.B, tmp)
    write_frame(reporting.trace_frame([trace]), out / "trace.csv")
    write_json(trace, out / "trace.json")
    write_json(RunSummary.from_trace(trace), out / "summary.json")
    logger.info("wrote factorization outputs to %s", out)
    return status


def cmd_compare(args: argparse.Namespace) -> int:
    descriptor = _descriptor(args)
    X = datasets.load_dataset(descriptor)
    plan = _plan(
        args,
        descriptor,
        algorithms=[Algorithm(a) for a in dict.fromkeys(_flatten(args.algo))],
        k_grid=[args.k],
        q_grid=[args.q],
        w_grid=[args.w],
        alpha_grid=[args.alpha],
        beta_grid=[args.beta],
    )
    traces, summaries = _execute(plan, X)

    out = Path(args.out)
    write_frame(reporting.trace_frame(traces), out / "compare_trace.csv")
    write_frame(reporting.runs_frame(summaries), out / "compare_runs.csv")
    write_frame(reporting.comparison_table(summaries), out / "compare_table.csv")
    return reporting.exit_status(summaries)


def cmd_sweep(args: argparse.Namespace) -> int:
    descriptor = _descriptor(args)
    X = datasets.load_dataset(descriptor)
    plan = _plan(
        args,
        descriptor,
        algorithms=[Algorithm(a) for a in dict.fromkeys(_flatten(args.algo))],
        k_grid=_flatten(args.k),
        q_grid=_flatten(args.q) or [None],
        w_grid=_flatten(args.w) or [settings.default_power_iterations],
        alpha_grid=_flatten(args.alpha) or [0.0],
        beta_grid=_flatten(args.beta) or [0.0],
    )
    _, summaries = _execute(plan, X)

    out = Path(args.out)
    write_frame(reporting.runs_frame(summaries), out / "sweep_runs.csv")
    write_frame(reporting.sweep_cells(summaries), out / "sweep_cells.csv")
    return reporting.exit_status(summaries)


def cmd_project(args: argparse.Namespace) -> int:
    X = datasets.load_dataset(_descriptor(args))
    sketch = SketchConfig(q=args.q, w=args.w, seed=args.seed)
    projectors = build_projectors(X, sketch)
    X_hat = projectors.compress_left(X)
    X_check = projectors.compress_right(X)

    report = ProjectionReport(
        q=args.q,
        w=args.w,
        seed=args.seed,
        shape=X.shape,
        left=pairwise_distortion(X, projectors, args.pairs, args.seed, side=ProjectorSide.left),
        right=pairwise_distortion(X, projectors, args.pairs, args.seed, side=ProjectorSide.right),
        spectrum_decay=estimate_spectrum_decay(X, seed=args.seed),
    )

    out = Path(args.out)
    for name, matrix in (("X_hat", X_hat), ("X_check", X_check)):
        if args.output_format == "mm":
            with atomic_path(out / f"{name}.mtx") as tmp:
                datasets.save_matrix_market(matrix, tmp)
        else:
            with atomic_path(out / f"{name}.csv") as tmp:
                datasets.save_dense_csv(matrix, tmp, header=True)
    write_json(report, out / "distortion.json")
    logger.info("projected %s with q=%s w=%s into %s", X.shape, args.q, args.w, out)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    algorithms = list(Algorithm) if args.algo == "all" else [Algorithm(args.algo)]
    q = _q_for(args, args.k)
    estimates = [
        estimate_cost(algorithm, args.d, args.n, args.k, q if algorithm.is_projected else None)
        for algorithm in algorithms
    ]
    reduction = None
    if args.algo == "all" or Algorithm(args.algo).is_projected:
        reduction = memory_reduction(args.d, args.n, args.k, q)
    print(EstimateReport(estimates=estimates, memory_reduction=reduction).model_dump_json(indent=2))
    return EXIT_OK


# --- entry point --------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("--log-level", default=settings.log_level)
    early, _ = pre.parse_known_args(argv)
    logging.basicConfig(
        level=str(early.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        if early.config is not None:
            _apply_config_file(parser, early.config)
        args = parser.parse_args(argv)
        handler: Callable[[argparse.Namespace], int] = args.handler
        return handler(args)
    except ValidationError as exc:
        print(f"error: invalid configuration: {_validation_message(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except (RpnmfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"])
        parts.append(f"{location}: {error['msg']}" if location else error["msg"])
    return "; ".join(parts)


if __name__ == "__main__":
    raise SystemExit(main())
