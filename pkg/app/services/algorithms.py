from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping

from app.contracts.models import RunConfig
from app.errors import BadWeights, OrderingViolation
from app.services.costs import LocalCost, ScalarSubproblem, solve_subproblem
from app.services.graph import NeighborPartition, Topology

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class NeighborSnapshot:
    """Neighbor data as of iteration `iteration`; never mixes iterations.

    `duals` holds the edge duals this agent reads but does not own: lambda_ji from
    predecessors (parallel ADMM) or lambda_ij from successors (sequential ADMM).
    """

    iteration: int
    x: Mapping[int, float]
    duals: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class AgentState:
    """Agent i at iteration k.

    owned_duals is keyed by neighbor j:
      parallel-admm  j in S_i -> lambda_ij
      sequential-admm j in P_i -> lambda_ji
      pjadmm         j in N_i -> directed lambda_ij
    `fresh` carries x_j^{k+1} values already received this iteration.
    """

    agent: int
    iteration: int
    x: float
    owned_duals: Mapping[int, float]
    snapshot: NeighborSnapshot
    fresh: Mapping[int, float] = field(default_factory=dict)


def _require_current(state: AgentState) -> None:
    if state.snapshot.iteration != state.iteration:
        raise OrderingViolation(
            f"snapshot carries iteration {state.snapshot.iteration} data, agent is at {state.iteration}",
            context={"agent": state.agent, "iteration": state.iteration},
        )


def _require_fresh(state: AgentState, needed, what: str) -> None:
    missing = [j for j in needed if j not in state.fresh]
    if missing:
        raise OrderingViolation(
            f"{what} needs iteration-{state.iteration + 1} values from {missing}",
            context={"agent": state.agent, "iteration": state.iteration},
        )


# --- proposed parallel ADMM ---

def parallel_subproblem(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> ScalarSubproblem:
    _require_current(state)
    rho = cfg.rho
    P, S, N = part.predecessors[i], part.successors[i], part.neighbors[i]
    xk, snap = state.x, state.snapshot
    linear = math.fsum(
        [snap.duals[j] for j in P]
        + [-state.owned_duals[j] for j in S]
        + [-rho * snap.x[j] for j in P]
        + [rho * len(P) * xk]
    )
    anchors = [(0.5 * rho, snap.x[j]) for j in N]
    if P:
        anchors.append(((1.0 + cfg.eps1) * rho * len(P), xk))
    if S and cfg.eps2 > 0:
        anchors.append((cfg.eps2 * rho * len(S), xk))
    return ScalarSubproblem(cost=cost, linear=linear, anchors=tuple(anchors))


def parallel_x_update(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> float:
    """x_i^{k+1}; reads iteration-k data only."""
    return solve_subproblem(parallel_subproblem(i, state, cost, part, cfg), cfg.subproblem_tol)


def parallel_dual_update(i: int, x_i_next: float, state: AgentState, cfg: RunConfig) -> Dict[int, float]:
    """lambda_ij^{k+1} = lambda_ij^k - rho (x_i^{k+1} - x_j^k) for j in S_i."""
    _require_current(state)
    return {j: lam - cfg.rho * (x_i_next - state.snapshot.x[j]) for j, lam in sorted(state.owned_duals.items())}


# --- sequential ADMM baseline ---

def sequential_subproblem(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> ScalarSubproblem:
    _require_current(state)
    P, S = part.predecessors[i], part.successors[i]
    _require_fresh(state, P, "sequential x-update")
    rho, snap = cfg.rho, state.snapshot
    anchors = [(0.5 * rho, state.fresh[j] - state.owned_duals[j] / rho) for j in P]
    anchors += [(0.5 * rho, snap.x[j] + snap.duals[j] / rho) for j in S]
    return ScalarSubproblem(cost=cost, linear=0.0, anchors=tuple(anchors))


def sequential_x_update(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> float:
    """x_i^{k+1}; every predecessor must already have produced x_j^{k+1}."""
    return solve_subproblem(sequential_subproblem(i, state, cost, part, cfg), cfg.subproblem_tol)


def sequential_dual_update(i: int, x_i_next: float, state: AgentState, cfg: RunConfig) -> Dict[int, float]:
    """lambda_ji^{k+1} = lambda_ji^k - rho (x_j^{k+1} - x_i^{k+1}) for j in P_i."""
    _require_fresh(state, state.owned_duals.keys(), "sequential dual update")
    return {j: lam - cfg.rho * (state.fresh[j] - x_i_next) for j, lam in sorted(state.owned_duals.items())}


# --- proximal Jacobian ADMM baseline ---

PJADMM_PROXIMAL_WEIGHT = 0.5


def pjadmm_subproblem(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> ScalarSubproblem:
    _require_current(state)
    N, snap = part.neighbors[i], state.snapshot
    # Lagrangian sign convention F - lambda^T A x: the dual step below is an ascent step.
    linear = -math.fsum(state.owned_duals[j] for j in N)
    anchors = [(PJADMM_PROXIMAL_WEIGHT, state.x)] + [(0.5 * cfg.rho, snap.x[j]) for j in N]
    return ScalarSubproblem(cost=cost, linear=linear, anchors=tuple(anchors))


def pjadmm_x_update(
    i: int, state: AgentState, cost: LocalCost, part: NeighborPartition, cfg: RunConfig
) -> float:
    return solve_subproblem(pjadmm_subproblem(i, state, cost, part, cfg), cfg.subproblem_tol)


def pjadmm_dual_update(i: int, x_i_next: float, state: AgentState, cfg: RunConfig) -> Dict[int, float]:
    """lambda_ij^{k+1} = lambda_ij^k - rho (x_i^{k+1} - x_j^{k+1}); runs after every x-update."""
    _require_fresh(state, state.owned_duals.keys(), "pjadmm dual update")
    return {j: lam - cfg.rho * (x_i_next - state.fresh[j]) for j, lam in sorted(state.owned_duals.items())}


# --- distributed subgradient baseline ---

def metropolis_weights(t: Topology, part: NeighborPartition) -> Dict[int, Dict[int, float]]:
    """a_ij = 1 / (1 + max(d_i, d_j)) on edges, self weight takes the remainder."""
    rows: Dict[int, Dict[int, float]] = {}
    for i in range(1, t.n + 1):
        di = part.degree(i)
        row = {j: 1.0 / (1.0 + max(di, part.degree(j))) for j in part.neighbors[i]}
        row[i] = 1.0 - math.fsum(row.values())
        rows[i] = dict(sorted(row.items()))
    return rows


def check_weight_row(i: int, row: Mapping[int, float], part: NeighborPartition) -> None:
    allowed = set(part.neighbors[i]) | {i}
    outside = sorted(set(row) - allowed)
    if outside:
        raise BadWeights(f"weights on non-neighbors {outside}", context={"agent": i})
    negative = {j: w for j, w in row.items() if w < 0}
    if negative:
        raise BadWeights(f"negative weights {negative}", context={"agent": i})
    total = math.fsum(row.values())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise BadWeights(f"weight row sums to {total!r}, not 1", context={"agent": i})


def dsm_update(
    i: int,
    state: AgentState,
    weights: Mapping[int, float],
    k: int,
    cost: LocalCost,
    cfg: RunConfig,
) -> float:
    """x_i^{k+1} = sum_j a_ij x_j^k - alpha(k) d_i(x_i^k), with k counted from 1."""
    _require_current(state)
    if k < 1:
        raise OrderingViolation("subgradient step counter starts at 1", context={"agent": i, "k": k})
    values = {**state.snapshot.x, i: state.x}
    mixed = math.fsum(w * values[j] for j, w in sorted(weights.items()))
    return mixed - cfg.dsm_stepsize.at(k) * cost.subgradient(state.x)
