from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.settings import settings

AlgorithmName = Literal["parallel-admm", "sequential-admm", "pjadmm", "dsm"]
ALGORITHMS: Tuple[str, ...] = ("parallel-admm", "sequential-admm", "pjadmm", "dsm")

GeneratorName = Literal["path", "ring", "complete", "star", "erdos-renyi"]
Schedule = Literal["index", "reversed", "shuffled"]


class DsmStepsize(BaseModel):
    """alpha(k) = scale * k^-power (k starts at 1); power=0 gives a constant step."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scale: float = Field(1.0, gt=0)
    power: float = Field(0.5, ge=0)

    def at(self, k: int) -> float:
        return self.scale * float(k) ** (-self.power)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    algorithm: AlgorithmName = "parallel-admm"
    rho: float = Field(settings.DEFAULT_RHO, gt=0)
    eps1: float = Field(0.0, ge=0)
    eps2: float = Field(0.0, ge=0)
    max_iter: int = Field(settings.DEFAULT_MAX_ITER, ge=0)
    stop_tol: Optional[float] = Field(None, gt=0)
    subproblem_tol: float = Field(settings.SUBPROBLEM_TOL, gt=0)
    dsm_stepsize: DsmStepsize = Field(default_factory=DsmStepsize)
    seed: int = settings.DEFAULT_SEED
    schedule: Schedule = "index"
    workers: int = Field(settings.HARNESS_WORKERS, ge=1)
    locality_checks: bool = settings.LOCALITY_CHECKS


# --- experiment config file ([graph], [instance], [run], [output], [sweep]) ---

class GraphSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Optional[Literal["fig1", "benchmark"]] = None
    generator: Optional[GeneratorName] = None
    n: Optional[int] = Field(None, ge=2)
    edges: Optional[List[Tuple[int, int]]] = None
    seed: int = settings.DEFAULT_SEED
    p: float = Field(settings.BENCHMARK_EDGE_PROB, gt=0, le=1)

    @model_validator(mode="after")
    def _one_source(self) -> "GraphSpec":
        sources = [self.preset is not None, self.generator is not None, self.edges is not None]
        if sum(sources) > 1:
            raise ValueError("graph: give exactly one of preset, generator or edges")
        if (self.generator is not None or self.edges is not None) and self.n is None:
            raise ValueError("graph: n is required with a generator or explicit edges")
        if not any(sources):
            self.preset = "benchmark"
        return self


class InstanceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = settings.DEFAULT_SEED
    replay: Optional[str] = None
    noiseless: bool = False
    cost: Literal["least_squares", "huber"] = "least_squares"
    huber_delta: float = Field(1.0, gt=0)


class RunSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    algorithms: List[AlgorithmName] = Field(default_factory=lambda: list(ALGORITHMS))
    rho: float = Field(settings.DEFAULT_RHO, gt=0)
    eps1: float = Field(0.0, ge=0)
    eps2: float = Field(0.0, ge=0)
    max_iter: int = Field(settings.DEFAULT_MAX_ITER, ge=0)
    stop_tol: Optional[float] = Field(None, gt=0)
    subproblem_tol: float = Field(settings.SUBPROBLEM_TOL, gt=0)
    dsm_stepsize: DsmStepsize = Field(default_factory=DsmStepsize)
    schedule: Schedule = "index"
    workers: int = Field(settings.HARNESS_WORKERS, ge=1)

    @field_validator("algorithms")
    @classmethod
    def _non_empty(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one algorithm is required")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate algorithm in {v}")
        return v

    def for_algorithm(self, algorithm: str, *, seed: int, eps: Optional[float] = None) -> RunConfig:
        return RunConfig(
            algorithm=algorithm,
            rho=self.rho,
            eps1=self.eps1 if eps is None else eps,
            eps2=self.eps2 if eps is None else eps,
            max_iter=self.max_iter,
            stop_tol=self.stop_tol,
            subproblem_tol=self.subproblem_tol,
            dsm_stepsize=self.dsm_stepsize,
            seed=seed,
            schedule=self.schedule,
            workers=self.workers,
        )


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = settings.OUT_DIR
    include_duals: bool = True
    include_metrics: bool = True
    certificates: bool = True
    strict_certificates: bool = False


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps: List[float] = Field(default_factory=lambda: [0.0, 1.0, 5.0])
    threshold: float = Field(settings.RESIDUAL_THRESHOLD, gt=0)
    fallback_seeds: int = Field(10, ge=1)

    @field_validator("eps")
    @classmethod
    def _non_negative(cls, v: List[float]) -> List[float]:
        bad = [e for e in v if e < 0]
        if bad:
            raise ValueError(f"eps values must be >= 0, got {bad}")
        if not v:
            raise ValueError("at least one eps value is required")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    graph: GraphSpec = Field(default_factory=GraphSpec)
    instance: InstanceSpec = Field(default_factory=InstanceSpec)
    run: RunSpec = Field(default_factory=RunSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)


# --- instance replay file ---

class CostRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["least_squares", "huber", "quadratic"]
    M: Optional[float] = None
    y: Optional[float] = None
    delta: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None


class InstanceFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = "instance@1.0.0"
    n: int = Field(ge=2)
    seed: Optional[int] = None
    noiseless: bool = False
    signal: Optional[float] = None
    costs: List[CostRecord]

    @model_validator(mode="after")
    def _length(self) -> "InstanceFile":
        if len(self.costs) != self.n:
            raise ValueError(f"instance declares n={self.n} but lists {len(self.costs)} costs")
        return self


# --- certificate summary block ---

class CertificateSummary(BaseModel):
    algorithm: str
    iterations: int
    final_residual: float
    residual_mode: Literal["relative", "absolute"]
    final_consensus_gap: float
    final_cost_gap: float
    descent_min_slack: Optional[float] = None
    descent_pass: Optional[bool] = None
    descent_min_slack_half_eps: Optional[float] = None
    descent_pass_half_eps: Optional[bool] = None
    ergodic_min_margin: Optional[float] = None
    ergodic_pass: Optional[bool] = None
    monotonicity_min: Optional[float] = None
    monotonicity_pass: Optional[bool] = None
    vi_residual: float
    tolerance: float

    def passed(self) -> bool:
        # descent slack is reported only; it goes negative on most multi-agent graphs
        flags = [self.ergodic_pass, self.monotonicity_pass]
        return all(f for f in flags if f is not None)


class RunManifest(BaseModel):
    command: str
    config: Dict[str, object]
    artifacts: Dict[str, str] = Field(default_factory=dict)  # key -> sha256
    summaries: List[CertificateSummary] = Field(default_factory=list)
