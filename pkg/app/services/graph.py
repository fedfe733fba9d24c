from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np

from app.errors import Disconnected, DuplicateEdge, IndexOutOfRange, SelfLoop, TopologyError

log = logging.getLogger(__name__)

Edge = Tuple[int, int]

GENERATORS = ("path", "ring", "complete", "star", "erdos-renyi")


@dataclass(frozen=True)
class Topology:
    """Fixed undirected graph over agents 1..n.

    Edges are stored as (i, j) with i < j in ascending lexicographic order;
    that order is also the stacking order of the edge dual vector.
    """

    n: int
    edges: Tuple[Edge, ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> Dict[Edge, int]:
        return {e: r for r, e in enumerate(self.edges)}

    @cached_property
    def edge_set(self) -> FrozenSet[Edge]:
        return frozenset(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edge_set

    def degree(self, i: int) -> int:
        return sum(1 for e in self.edges if i in e)


@dataclass(frozen=True)
class NeighborPartition:
    neighbors: Dict[int, Tuple[int, ...]]
    predecessors: Dict[int, Tuple[int, ...]]
    successors: Dict[int, Tuple[int, ...]]

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])


@dataclass(frozen=True)
class IncidenceSet:
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)


def build_topology(n: int, edge_list: Iterable[Sequence[int]]) -> Topology:
    if n < 2:
        raise TopologyError(f"a network needs at least two agents, got n={n}")
    seen: Dict[Edge, Sequence[int]] = {}
    for raw in edge_list:
        if len(raw) != 2:
            raise TopologyError(f"edge must be a pair, got {raw!r}")
        i, j = int(raw[0]), int(raw[1])
        for v in (i, j):
            if not 1 <= v <= n:
                raise IndexOutOfRange(f"endpoint {v} outside 1..{n}", context={"edge": (i, j)})
        if i == j:
            raise SelfLoop(f"self-loop on agent {i}", context={"edge": (i, j)})
        e = (min(i, j), max(i, j))
        if e in seen:
            raise DuplicateEdge(f"duplicate edge {e}", context={"edge": (i, j), "first": tuple(seen[e])})
        seen[e] = (i, j)

    edges = tuple(sorted(seen))
    g = nx.Graph()
    g.add_nodes_from(range(1, n + 1))
    g.add_edges_from(edges)
    if not nx.is_connected(g):
        parts = nx.number_connected_components(g)
        raise Disconnected(f"graph has {parts} connected components", context={"n": n, "m": len(edges)})
    return Topology(n=n, edges=edges)


def partition_neighbors(t: Topology) -> NeighborPartition:
    preds: Dict[int, List[int]] = {i: [] for i in range(1, t.n + 1)}
    succs: Dict[int, List[int]] = {i: [] for i in range(1, t.n + 1)}
    for i, j in t.edges:
        succs[i].append(j)
        preds[j].append(i)
    return NeighborPartition(
        neighbors={i: tuple(sorted(preds[i] + succs[i])) for i in preds},
        predecessors={i: tuple(sorted(v)) for i, v in preds.items()},
        successors={i: tuple(sorted(v)) for i, v in succs.items()},
    )


def build_incidence(t: Topology) -> IncidenceSet:
    A = np.zeros((t.m, t.n))
    for r, (p, q) in enumerate(t.edges):
        A[r, p - 1] = 1.0
        A[r, q - 1] = -1.0
    B = np.maximum(0.0, A)
    E = A - B
    for M in (A, B, E):
        M.setflags(write=False)
    return IncidenceSet(A=A, B=B, E=E)


# --- generators ---

def _from_nx(g: nx.Graph) -> List[Edge]:
    return [(int(u) + 1, int(v) + 1) for u, v in g.edges()]


def generate_topology(kind: str, n: int, *, seed: int = 0, p: float = 0.4, max_attempts: int = 1000) -> Topology:
    """Built-in graph families. `erdos-renyi` redraws with seed, seed+1, ...
    until a connected sample appears."""
    if kind == "path":
        return build_topology(n, _from_nx(nx.path_graph(n)))
    if kind == "ring":
        if n < 3:
            return build_topology(n, _from_nx(nx.path_graph(n)))
        return build_topology(n, _from_nx(nx.cycle_graph(n)))
    if kind == "complete":
        return build_topology(n, _from_nx(nx.complete_graph(n)))
    if kind == "star":
        return build_topology(n, _from_nx(nx.star_graph(n - 1)))
    if kind == "erdos-renyi":
        if not 0.0 < p <= 1.0:
            raise TopologyError(f"edge probability must be in (0, 1], got {p}")
        for attempt in range(max_attempts):
            g = nx.gnp_random_graph(n, p, seed=seed + attempt)
            if n >= 2 and nx.is_connected(g):
                if attempt:
                    log.debug("erdos-renyi connected after retries", extra={"attempts": attempt + 1, "seed": seed})
                return build_topology(n, _from_nx(g))
        raise Disconnected(f"no connected G({n}, {p}) sample within {max_attempts} draws", context={"seed": seed})
    raise TopologyError(f"unknown graph generator {kind!r}; expected one of {GENERATORS}")
