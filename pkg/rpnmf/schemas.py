from __future__ import annotations

import statistics
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from rpnmf.models import Algorithm, DatasetFormat, DatasetKind, ProjectorSide, RunStatus


class SketchConfig(BaseModel):
    q: int = Field(gt=0, description="target rank plus oversampling")
    w: int = Field(default=0, ge=0, description="power iterations")
    seed: int = Field(default=0, ge=0)


class SolverConfig(BaseModel):
    algorithm: Algorithm
    k: int = Field(ge=1)
    sketch: Optional[SketchConfig] = None
    alpha: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    beta: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    max_iterations: int = Field(default=500, ge=0)
    rel_tolerance: float = Field(default=1e-6, gt=0.0)
    error_interval: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)
    normalize_a: Optional[bool] = None

    @model_validator(mode="after")
    def _check_projection(self) -> "SolverConfig":
        if self.algorithm.is_projected:
            if self.sketch is None:
                raise ValueError(f"{self.algorithm.value} needs a sketch configuration (q, w)")
            if self.k >= self.sketch.q:
                raise ValueError(f"{self.algorithm.value} needs k < q, got k={self.k}, q={self.sketch.q}")
        return self

    @property
    def normalize(self) -> bool:
        if self.normalize_a is None:
            return self.algorithm.normalizes_by_default
        return self.normalize_a

    @property
    def q(self) -> Optional[int]:
        return self.sketch.q if self.algorithm.is_projected and self.sketch else None

    @property
    def w(self) -> Optional[int]:
        return self.sketch.w if self.algorithm.is_projected and self.sketch else None


class CostEstimate(BaseModel):
    algorithm: Algorithm
    flops_per_iteration: int = Field(gt=0)
    memory_floats: int = Field(gt=0)
    d: int
    n: int
    k: int
    q: Optional[int] = None


class TraceRecord(BaseModel):
    iteration: int
    error: float
    elapsed_seconds: float


class RunTrace(BaseModel):
    algorithm: Algorithm
    seed: int
    config: SolverConfig
    estimate: Optional[CostEstimate] = None
    records: List[TraceRecord] = Field(default_factory=list)
    update_seconds: List[float] = Field(default_factory=list)
    gini_b: Optional[float] = None
    converged: bool = False
    iterations_run: int = 0
    reinitializations: int = 0
    status: RunStatus = RunStatus.completed
    message: Optional[str] = None

    @property
    def final_error(self) -> Optional[float]:
        return self.records[-1].error if self.records else None

    @property
    def median_seconds_per_update(self) -> Optional[float]:
        return statistics.median(self.update_seconds) if self.update_seconds else None


class RunSummary(BaseModel):
    algorithm: Algorithm
    seed: int
    k: int
    q: Optional[int]
    w: Optional[int]
    alpha: float
    beta: float
    final_error: Optional[float]
    gini_b: Optional[float]
    flops_per_iter: Optional[int]
    memory_floats: Optional[int]
    iterations_run: int
    converged: bool
    median_seconds_per_update: Optional[float]
    status: RunStatus
    estimate: Optional[CostEstimate] = None

    @classmethod
    def from_trace(cls, trace: RunTrace) -> "RunSummary":
        config = trace.config
        return cls(
            algorithm=trace.algorithm,
            seed=trace.seed,
            k=config.k,
            q=config.q,
            w=config.w,
            alpha=config.alpha,
            beta=config.beta,
            final_error=trace.final_error,
            gini_b=trace.gini_b,
            flops_per_iter=trace.estimate.flops_per_iteration if trace.estimate else None,
            memory_floats=trace.estimate.memory_floats if trace.estimate else None,
            iterations_run=trace.iterations_run,
            converged=trace.converged,
            median_seconds_per_update=trace.median_seconds_per_update,
            status=trace.status,
            estimate=trace.estimate,
        )


class DistortionReport(BaseModel):
    side: ProjectorSide
    pairs: int
    zero_distance_pairs: int = 0
    max_relative_distortion: float
    mean_relative_distortion: float


class ProjectionReport(BaseModel):
    q: int
    w: int
    seed: int
    shape: Tuple[int, int]
    left: DistortionReport
    right: DistortionReport
    spectrum_decay: Optional[float] = None


class SyntheticSpec(BaseModel):
    d: int = Field(gt=0)
    n: int = Field(gt=0)
    true_rank: int = Field(gt=0)
    spectrum_decay: float = Field(default=0.0, ge=0.0)
    noise_level: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_rank(self) -> "SyntheticSpec":
        if self.true_rank > min(self.d, self.n):
            raise ValueError(f"true_rank {self.true_rank} exceeds min(d, n) = {min(self.d, self.n)}")
        return self


class DatasetDescriptor(BaseModel):
    name: str
    format: DatasetFormat
    path: Optional[Path] = None
    has_header: bool = False
    one_per_line: bool = False
    vocab_size: int = Field(default=1000, gt=0)
    max_docs: int = Field(default=5000, gt=0)
    synthetic: Optional[SyntheticSpec] = None
    expected_dims: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetDescriptor":
        if self.format == DatasetFormat.synthetic:
            if self.synthetic is None:
                raise ValueError("synthetic datasets need generator parameters")
        elif self.path is None:
            raise ValueError(f"{self.format.value} datasets need an input path")
        return self

    @property
    def kind(self) -> DatasetKind:
        if self.format == DatasetFormat.synthetic:
            return DatasetKind.synthetic
        if self.format in (DatasetFormat.mm, DatasetFormat.corpus):
            return DatasetKind.sparse
        return DatasetKind.dense


class EstimateReport(BaseModel):
    estimates: List[CostEstimate]
    memory_reduction: Optional[float] = None


class ExperimentPlan(BaseModel):
    dataset: DatasetDescriptor
    algorithms: List[Algorithm] = Field(min_length=1)
    k_grid: List[int] = Field(min_length=1)
    w_grid: List[int] = Field(default_factory=lambda: [0])
    q_grid: List[Optional[int]] = Field(default_factory=lambda: [None])
    alpha_grid: List[float] = Field(default_factory=lambda: [0.0])
    beta_grid: List[float] = Field(default_factory=lambda: [0.0])
    seeds: List[int] = Field(min_length=1)
    max_iterations: int = Field(default=500, ge=0)
    error_interval: int = Field(default=5, ge=1)
    rel_tolerance: float = Field(default=1e-6, gt=0.0)
    oversampling: int = Field(default=5, ge=1)
    normalize_a: Optional[bool] = None
    output_dir: Path = Path("runs")
    jobs: int = Field(default=1, ge=1)
