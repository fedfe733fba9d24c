import os
from dataclasses import dataclass


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


@dataclass(frozen=True)
class Settings:
    SERVICE_NAME: str = os.getenv("SERVICE_NAME", "padmm")

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FORMAT: str = os.getenv("LOG_FORMAT", "json")  # json|text

    OUT_DIR: str = os.getenv("OUT_DIR", "./results")

    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "42"))
    DEFAULT_RHO: float = float(os.getenv("DEFAULT_RHO", "1.0"))
    DEFAULT_MAX_ITER: int = int(os.getenv("DEFAULT_MAX_ITER", "1000"))

    # Benchmark network: seeded Erdos-Renyi graph, retried until connected
    BENCHMARK_N: int = int(os.getenv("BENCHMARK_N", "9"))
    BENCHMARK_EDGE_PROB: float = float(os.getenv("BENCHMARK_EDGE_PROB", "0.4"))

    SUBPROBLEM_TOL: float = float(os.getenv("SUBPROBLEM_TOL", "1e-12"))
    CERT_TOL: float = float(os.getenv("CERT_TOL", "1e-9"))
    RESIDUAL_THRESHOLD: float = float(os.getenv("RESIDUAL_THRESHOLD", "1e-4"))

    # Mailbox edge checks; benchmark builds may switch them off
    LOCALITY_CHECKS: bool = _flag("LOCALITY_CHECKS", "true")
    HARNESS_WORKERS: int = int(os.getenv("HARNESS_WORKERS", "1"))


settings = Settings()
