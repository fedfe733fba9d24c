from __future__ import annotations

import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import List, Optional, Sequence

import tomli_w
from pydantic import ValidationError

from app.contracts.models import CostRecord, ExperimentConfig, InstanceFile
from app.errors import ArtifactIoError, ConfigError
from app.services.costs import HuberCost, LeastSquaresCost, LocalCost, QuadraticCost


def _validation_message(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def parse_config(text: str, *, base_dir: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_validation_message(e)}") from e

    replay = cfg.instance.replay
    if replay is not None:
        if base_dir and not os.path.isabs(replay):
            replay = os.path.normpath(os.path.join(base_dir, replay))
            cfg.instance.replay = replay
        if not os.path.isfile(replay):
            raise ConfigError(f"instance replay file not found: {replay}")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.model_dump(mode="json", exclude_none=True))


# --- instance replay files ---

def cost_record(f: LocalCost) -> CostRecord:
    if isinstance(f, LeastSquaresCost):
        return CostRecord(kind="least_squares", M=f.M, y=f.y)
    if isinstance(f, HuberCost):
        return CostRecord(kind="huber", M=f.M, y=f.y, delta=f.delta)
    if isinstance(f, QuadraticCost):
        return CostRecord(kind="quadratic", a=f.a, b=f.b, c=f.c)
    raise ConfigError(f"cost kind {getattr(f, 'kind', type(f).__name__)!r} cannot be saved")


def _cost_from_record(rec: CostRecord, idx: int) -> LocalCost:
    def need(*names: str) -> List[float]:
        missing = [n for n in names if getattr(rec, n) is None]
        if missing:
            raise ConfigError(f"cost {idx} ({rec.kind}) is missing {missing}")
        return [getattr(rec, n) for n in names]

    if rec.kind == "least_squares":
        M, y = need("M", "y")
        return LeastSquaresCost(M=M, y=y)
    if rec.kind == "huber":
        M, y, delta = need("M", "y", "delta")
        return HuberCost(M=M, y=y, delta=delta)
    a, b = need("a", "b")
    return QuadraticCost(a=a, b=b, c=rec.c or 0.0)


def instance_file(
    costs: Sequence[LocalCost], *, seed: Optional[int] = None, noiseless: bool = False, signal: Optional[float] = None
) -> InstanceFile:
    return InstanceFile(
        n=len(costs), seed=seed, noiseless=noiseless, signal=signal, costs=[cost_record(f) for f in costs]
    )


def load_instance(path: str) -> InstanceFile:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read instance file {path}: {e}") from e
    try:
        return InstanceFile.model_validate_json(data)
    except ValidationError as e:
        raise ConfigError(f"invalid instance file {path}: {_validation_message(e)}") from e


def costs_from_instance(inst: InstanceFile) -> List[LocalCost]:
    return [_cost_from_record(rec, i + 1) for i, rec in enumerate(inst.costs)]


def dump_instance(inst: InstanceFile) -> str:
    try:
        return inst.model_dump_json(indent=2)
    except ValueError as e:
        raise ArtifactIoError(f"cannot serialize instance: {e}") from e

