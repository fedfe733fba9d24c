from __future__ import annotations

from app.errors import ConfigError
from app.services.graph import Topology, build_topology, generate_topology
from app.settings import settings

# 4-agent worked example: P_4 = {1, 2, 3}, S_1 = {2, 3, 4}
FIG1_N = 4
FIG1_EDGES = ((1, 2), (1, 3), (1, 4), (2, 4), (3, 4))

PRESETS = ("fig1", "benchmark")


def preset_topology(name: str, *, seed: int = settings.DEFAULT_SEED, p: float = settings.BENCHMARK_EDGE_PROB) -> Topology:
    """Built-in reference graphs.

    `benchmark` is the default comparison network: a seeded G(n, p) sample over
    BENCHMARK_N agents, redrawn until connected.
    """
    if name == "fig1":
        return build_topology(FIG1_N, FIG1_EDGES)
    if name == "benchmark":
        return generate_topology("erdos-renyi", settings.BENCHMARK_N, seed=seed, p=p)
    raise ConfigError(f"unknown graph preset {name!r}; expected one of {PRESETS}")
