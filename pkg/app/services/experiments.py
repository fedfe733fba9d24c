from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.contracts.models import CertificateSummary, ExperimentConfig, GraphSpec, InstanceFile, RunManifest
from app.errors import AdmmError, ConfigError
from app.infra.logging import run_context
from app.infra.storage import LocalStorage, make_storage
from app.refdata.presets import preset_topology
from app.services.analysis import OracleSolution, certificate_report, iterations_to_threshold, residual, solve_centralized
from app.services.audit import RunAuditLog
from app.services.config_loader import (
    costs_from_instance,
    dump_config,
    dump_instance,
    instance_file,
    load_instance,
)
from app.services.costs import HuberCost, LocalCost, draw_ls_instance
from app.services.fingerprint import FingerprintService
from app.services.graph import Topology, build_topology, generate_topology
from app.services.harness import IterationTrace, run, trace_csv, trace_frame

log = logging.getLogger(__name__)

MANIFEST_KEY = "manifest.json"
THRESHOLD_COLUMNS = ["algorithm", "threshold", "iterations_to_threshold"]


@dataclass
class RunOutcome:
    exit_code: int
    run_id: str
    summaries: List[CertificateSummary] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    traces: Dict[str, IterationTrace] = field(default_factory=dict)
    table: Optional[pd.DataFrame] = None
    thresholds: Optional[pd.DataFrame] = None


class ResultsWriter:
    """Writes artifacts into the results directory, fingerprints them and logs each write."""

    def __init__(self, storage: LocalStorage, audit: RunAuditLog, run_id: str) -> None:
        self.storage = storage
        self.audit = audit
        self.run_id = run_id
        self.artifacts: Dict[str, str] = {}

    def write(self, key: str, text: str, *, algorithm: Optional[str] = None) -> str:
        self.storage.put_text(key, text)
        digest = FingerprintService.sha256_text(text)
        self.artifacts[key] = digest
        self.audit.write("ARTIFACT.WRITTEN", run_id=self.run_id, algorithm=algorithm, payload={"key": key, "sha256": digest})
        return digest

    def manifest(self, command: str, cfg: ExperimentConfig, summaries: Sequence[CertificateSummary]) -> None:
        m = RunManifest(
            command=command,
            config=cfg.model_dump(mode="json", exclude_none=True),
            artifacts=FingerprintService.for_keys(self.storage, self.artifacts),
            summaries=list(summaries),
        )
        self.storage.put_text(MANIFEST_KEY, m.model_dump_json(indent=2))


# --- instance preparation ---

def topology_from_spec(g: GraphSpec) -> Topology:
    if g.edges is not None:
        return build_topology(g.n, g.edges)
    if g.generator is not None:
        return generate_topology(g.generator, g.n, seed=g.seed, p=g.p)
    return preset_topology(g.preset or "benchmark", seed=g.seed, p=g.p)


def prepare_instance(cfg: ExperimentConfig, n: int) -> Tuple[List[LocalCost], InstanceFile]:
    wanted = cfg.instance
    if wanted.replay is not None:
        inst = load_instance(wanted.replay)
        if inst.n != n:
            raise ConfigError(f"instance has {inst.n} agents but the graph has {n}", context={"file": wanted.replay})
        return costs_from_instance(inst), inst

    drawn = draw_ls_instance(n, wanted.seed, noiseless=wanted.noiseless)
    costs: List[LocalCost] = list(drawn.costs)
    if wanted.cost == "huber":
        costs = [HuberCost(M=f.M, y=f.y, delta=wanted.huber_delta) for f in drawn.costs]
    return costs, instance_file(costs, seed=wanted.seed, noiseless=wanted.noiseless, signal=drawn.signal)


@dataclass
class _Prepared:
    topology: Topology
    costs: List[LocalCost]
    instance: InstanceFile
    oracle: OracleSolution


def _prepare(cfg: ExperimentConfig) -> _Prepared:
    topology = topology_from_spec(cfg.graph)
    costs, inst = prepare_instance(cfg, topology.n)
    oracle = solve_centralized(costs, topology)
    log.info(
        "instance ready",
        extra={"n": topology.n, "m": topology.m, "x_star": oracle.x_star, "F_star": oracle.F_star},
    )
    return _Prepared(topology=topology, costs=costs, instance=inst, oracle=oracle)


def _run_one(
    cfg: ExperimentConfig, prep: _Prepared, algorithm: str, writer: Optional[ResultsWriter], *, eps: Optional[float] = None
) -> Tuple[IterationTrace, CertificateSummary]:
    rc = cfg.run.for_algorithm(algorithm, seed=cfg.instance.seed, eps=eps)
    trace = run(rc, prep.topology, prep.costs, oracle=prep.oracle)
    report = certificate_report(trace.xs, trace.lams, prep.costs, prep.oracle, prep.topology, rc)
    s = report.summary
    if writer is not None:
        out = cfg.output
        frame = trace_frame(
            trace, prep.topology, prep.costs, rc,
            oracle=prep.oracle, include_duals=out.include_duals, include_metrics=out.include_metrics,
        )
        writer.write(f"trace_{algorithm}.csv", trace_csv(frame), algorithm=algorithm)
        if out.certificates:
            writer.write(f"certificates_{algorithm}.csv", report.to_csv(), algorithm=algorithm)
            writer.audit.write(
                "CERTIFICATE.EVALUATED", run_id=writer.run_id, algorithm=algorithm, payload=s.model_dump(mode="json")
            )
    if not s.passed():
        log.warning("certificate failed", extra={"algorithm": algorithm, **s.model_dump(mode="json")})
    log.info(
        "run summary",
        extra={"algorithm": algorithm, "iterations": s.iterations, "residual": s.final_residual, "cost_gap": s.final_cost_gap},
    )
    return trace, s


def _open(cfg: ExperimentConfig, run_id: str) -> ResultsWriter:
    storage = make_storage(cfg.output.out_dir)
    return ResultsWriter(storage, RunAuditLog(storage), run_id)


def _execute(command: str, cfg: ExperimentConfig, body) -> RunOutcome:
    """Shared lifecycle: run id, audit start/complete/failed events, manifest."""
    with run_context() as rid:
        writer = _open(cfg, rid)
        writer.audit.write("RUN.STARTED", run_id=rid, payload={"command": command})
        try:
            outcome = body(writer)
        except AdmmError as e:
            writer.audit.write("RUN.FAILED", run_id=rid, payload={"code": e.code, "error": str(e), **_jsonable(e.context)})
            log.error("run failed", extra={"code": e.code, "error": str(e)})
            raise
        outcome.run_id = rid
        writer.manifest(command, cfg, outcome.summaries)
        outcome.artifacts = dict(writer.artifacts)
        writer.audit.write("RUN.COMPLETED", run_id=rid, payload={"exit_code": outcome.exit_code})
        return outcome


def _jsonable(ctx: Dict[str, object]) -> Dict[str, object]:
    return json.loads(json.dumps(ctx, default=str))


def _write_inputs(writer: ResultsWriter, cfg: ExperimentConfig, prep: _Prepared) -> None:
    writer.write("instance.json", dump_instance(prep.instance))
    writer.write("config.toml", dump_config(cfg))


def cmd_run(cfg: ExperimentConfig, *, strict: Optional[bool] = None) -> RunOutcome:
    strict = cfg.output.strict_certificates if strict is None else strict

    def body(writer: ResultsWriter) -> RunOutcome:
        prep = _prepare(cfg)
        _write_inputs(writer, cfg, prep)
        outcome = RunOutcome(exit_code=0, run_id=writer.run_id)
        for algorithm in cfg.run.algorithms:
            trace, s = _run_one(cfg, prep, algorithm, writer)
            outcome.traces[algorithm] = trace
            outcome.summaries.append(s)
        writer.write("report.json", json.dumps([s.model_dump(mode="json") for s in outcome.summaries], indent=2))
        if strict and cfg.output.certificates and not all(s.passed() for s in outcome.summaries):
            outcome.exit_code = 1
        return outcome

    return _execute("run", cfg, body)


def cmd_compare(cfg: ExperimentConfig, *, threshold: Optional[float] = None) -> RunOutcome:
    """Residual-vs-iteration columns for every configured engine on one shared instance."""
    threshold = cfg.sweep.threshold if threshold is None else threshold

    def body(writer: ResultsWriter) -> RunOutcome:
        prep = _prepare(cfg)
        _write_inputs(writer, cfg, prep)
        outcome = RunOutcome(exit_code=0, run_id=writer.run_id)
        columns: Dict[str, pd.Series] = {}
        reached: List[Dict[str, object]] = []
        for algorithm in cfg.run.algorithms:
            trace, s = _run_one(cfg, prep, algorithm, writer)
            outcome.traces[algorithm] = trace
            outcome.summaries.append(s)
            res = [residual(x, prep.oracle) for x in trace.xs]
            columns[algorithm] = pd.Series(res)
            k = iterations_to_threshold(res, threshold)
            reached.append({"algorithm": algorithm, "threshold": threshold, "iterations_to_threshold": k})
            log.info(
                "iterations to threshold", extra={"algorithm": algorithm, "threshold": threshold, "iterations": k}
            )
        table = pd.DataFrame(columns)
        table.insert(0, "iter", np.arange(len(table)))
        writer.write("compare.csv", table.to_csv(index=False, float_format="%.17g"))
        # empty cell: threshold not reached within max_iter
        thresholds = pd.DataFrame(reached, columns=THRESHOLD_COLUMNS).astype({"iterations_to_threshold": "Int64"})
        writer.write("compare_thresholds.csv", thresholds.to_csv(index=False, float_format="%.17g"))
        outcome.table = table
        outcome.thresholds = thresholds
        return outcome

    return _execute("compare", cfg, body)


def _sweep_row(cfg: ExperimentConfig, prep: _Prepared, eps_values: Sequence[float], threshold: float) -> List[float]:
    out = []
    sweep_run = cfg.run.model_copy(update={"stop_tol": threshold})
    scfg = cfg.model_copy(update={"run": sweep_run})
    for eps in eps_values:
        trace, _ = _run_one(scfg, prep, "parallel-admm", None, eps=eps)
        k = iterations_to_threshold([residual(x, prep.oracle) for x in trace.xs], threshold)
        out.append(float("inf") if k is None else float(k))
    return out


def _nondecreasing(values: Sequence[float]) -> bool:
    return all(a <= b for a, b in zip(values, values[1:]))


def cmd_sweep_eps(cfg: ExperimentConfig, eps_values: Optional[Sequence[float]] = None) -> RunOutcome:
    """Iterations-to-threshold of parallel ADMM per eps = eps1 = eps2.

    When the counts are not nondecreasing in eps on the configured instance, the
    sweep is repeated over `fallback_seeds` instance seeds and the median is reported.
    """
    eps_values = list(cfg.sweep.eps if eps_values is None else eps_values)
    bad = [e for e in eps_values if e < 0]
    if bad or not eps_values:
        raise ConfigError(f"eps values must be non-negative and non-empty, got {eps_values}")
    threshold = cfg.sweep.threshold

    def body(writer: ResultsWriter) -> RunOutcome:
        prep = _prepare(cfg)
        _write_inputs(writer, cfg, prep)
        iters = _sweep_row(cfg, prep, eps_values, threshold)
        table = pd.DataFrame({"eps": eps_values, "iterations_to_threshold": iters})
        monotone = _nondecreasing(iters)
        if not monotone:
            log.warning("iterations not monotone in eps; falling back to seed median", extra={"iterations": iters})
            rows = []
            for s in range(cfg.instance.seed, cfg.instance.seed + cfg.sweep.fallback_seeds):
                seeded = cfg.model_copy(update={"instance": cfg.instance.model_copy(update={"seed": s, "replay": None})})
                rows.append(_sweep_row(seeded, _prepare(seeded), eps_values, threshold))
            table["median_over_seeds"] = np.median(np.array(rows), axis=0)
        table["monotone"] = monotone
        writer.write("sweep_eps.csv", table.to_csv(index=False, float_format="%.17g"))
        return RunOutcome(exit_code=0, run_id=writer.run_id, table=table)

    return _execute("sweep-eps", cfg, body)


def cmd_gen_instance(
    path: str, *, n: int, seed: int, noiseless: bool = False, cost: str = "least_squares", huber_delta: float = 1.0
) -> InstanceFile:
    probe = ExperimentConfig.model_validate(
        {"instance": {"seed": seed, "noiseless": noiseless, "cost": cost, "huber_delta": huber_delta}}
    )
    _, inst = prepare_instance(probe, n)
    directory, name = os.path.split(os.path.abspath(path))
    make_storage(directory).put_text(name, dump_instance(inst))
    log.info("instance written", extra={"path": path, "n": n, "seed": seed})
    return inst
