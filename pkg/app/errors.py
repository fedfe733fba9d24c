from __future__ import annotations

from typing import Any, Dict, Optional


class AdmmError(Exception):
    """Base error. `code` is stable and safe to match on; `context` carries
    agent / iteration / algorithm details when known."""

    code = "ADMM.ERROR"

    def __init__(self, message: str, *, context: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **ctx: Any) -> "AdmmError":
        for k, v in ctx.items():
            self.context.setdefault(k, v)
        return self

    def __str__(self) -> str:
        if not self.context:
            return self.message
        ctx = ", ".join(f"{k}={v}" for k, v in sorted(self.context.items()))
        return f"{self.message} ({ctx})"


# --- graph ---

class TopologyError(AdmmError):
    code = "GRAPH.INVALID"


class DuplicateEdge(TopologyError):
    code = "GRAPH.DUPLICATE_EDGE"


class SelfLoop(TopologyError):
    code = "GRAPH.SELF_LOOP"


class Disconnected(TopologyError):
    code = "GRAPH.DISCONNECTED"


class IndexOutOfRange(TopologyError):
    code = "GRAPH.INDEX_OUT_OF_RANGE"


# --- scalar solver ---

class SolverError(AdmmError):
    code = "SOLVER.ERROR"


class BracketFailure(SolverError):
    code = "SOLVER.BRACKET_FAILURE"


class NonPositiveWeight(SolverError):
    code = "SOLVER.NON_POSITIVE_WEIGHT"


# --- centralized oracle ---

class OracleError(AdmmError):
    code = "ORACLE.ERROR"


class SingularInstance(OracleError):
    code = "ORACLE.SINGULAR"


class NoStationaryPoint(OracleError):
    code = "ORACLE.NO_STATIONARY_POINT"


class ZeroOptimum(OracleError):
    code = "ORACLE.ZERO_OPTIMUM"


# --- engines / harness ---

class EngineError(AdmmError):
    code = "ENGINE.ERROR"


class OrderingViolation(EngineError):
    code = "ENGINE.ORDERING_VIOLATION"


class LocalityViolation(EngineError):
    code = "ENGINE.LOCALITY_VIOLATION"


class BadWeights(EngineError):
    code = "ENGINE.BAD_WEIGHTS"


# --- outer surface ---

class ConfigError(AdmmError):
    code = "CONFIG.INVALID"


class ArtifactIoError(AdmmError):
    code = "ARTIFACT.IO"
