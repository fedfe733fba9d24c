from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from app.contracts.events import Message
from app.contracts.models import RunConfig
from app.errors import AdmmError, EngineError, LocalityViolation, OrderingViolation
from app.services import algorithms as alg
from app.services.algorithms import AgentState, NeighborSnapshot
from app.services.analysis import (
    OracleSolution,
    consensus_gap,
    cost_gap,
    lyapunov,
    residual,
    solve_centralized,
)
from app.services.costs import LocalCost
from app.services.graph import Topology, build_incidence, partition_neighbors
from app.workers.agent_pool import AgentPool

log = logging.getLogger(__name__)


class LocalView(Mapping):
    """Read-only neighbor data for one agent; asking for anyone else is a locality breach."""

    def __init__(self, owner: int, data: Dict[int, float], checks: bool = True) -> None:
        self._owner = owner
        self._data = data
        self._checks = checks

    def __getitem__(self, j: int) -> float:
        try:
            return self._data[j]
        except KeyError:
            if self._checks:
                raise LocalityViolation(
                    f"agent {self._owner} requested data of non-neighbor {j}", context={"agent": self._owner}
                ) from None
            raise

    def __contains__(self, j: object) -> bool:
        return j in self._data

    def __iter__(self) -> Iterator[int]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)


class Mailbox:
    """Inbound queue of one agent; accepts messages from neighbors only."""

    def __init__(self, owner: int, topology: Topology, checks: bool = True) -> None:
        self.owner = owner
        self._topology = topology
        self._checks = checks
        self._queue: List[Message] = []

    def deliver(self, msg: Message) -> None:
        if msg.receiver != self.owner:
            raise LocalityViolation(f"message for {msg.receiver} delivered to {self.owner}")
        if self._checks and not self._topology.has_edge(msg.sender, msg.receiver):
            raise LocalityViolation(
                f"no edge between {msg.sender} and {msg.receiver}",
                context={"agent": msg.sender, "iteration": msg.iteration},
            )
        self._queue.append(msg)

    def drain(self) -> List[Message]:
        out, self._queue = self._queue, []
        return out


@dataclass
class IterationTrace:
    algorithm: str
    xs: np.ndarray  # (K+1, n)
    lams: np.ndarray  # (K+1, m); zero columns for dsm
    stopped_early: bool = False
    messages: int = 0
    links: Set[Tuple[int, int]] = field(default_factory=set)

    @property
    def iterations(self) -> int:
        return self.xs.shape[0] - 1


def _stack_index(algorithm: str, p: int, q: int) -> Tuple[int, int]:
    """(holder, key) of the stacked dual for edge (p, q)."""
    if algorithm == "sequential-admm":
        return q, p
    return p, q


class NetworkSim:
    """Round-synchronous simulated network for one engine run.

    Each iteration is x-phase, barrier, dual-phase, barrier, exchange. Agents
    only ever see their own state and what arrived in their mailbox.
    """

    def __init__(
        self,
        cfg: RunConfig,
        topology: Topology,
        costs: Sequence[LocalCost],
        *,
        x0: Optional[Sequence[float]] = None,
        lam0: Optional[Sequence[float]] = None,
    ) -> None:
        if len(costs) != topology.n:
            raise EngineError(f"{len(costs)} costs for {topology.n} agents")
        self.cfg = cfg
        self.topology = topology
        self.costs = list(costs)
        self.part = partition_neighbors(topology)
        self.iteration = 0
        self.messages = 0
        self.links: Set[Tuple[int, int]] = set()
        self.mailboxes = {i: Mailbox(i, topology, cfg.locality_checks) for i in self.agents}
        self.weights = alg.metropolis_weights(topology, self.part) if cfg.algorithm == "dsm" else {}
        for i, row in self.weights.items():
            alg.check_weight_row(i, row, self.part)

        x0 = np.zeros(topology.n) if x0 is None else np.asarray(x0, dtype=float)
        lam0 = np.zeros(topology.m) if lam0 is None else np.asarray(lam0, dtype=float)
        self.x: Dict[int, float] = {i: float(x0[i - 1]) for i in self.agents}
        self.duals: Dict[int, Dict[int, float]] = {i: {} for i in self.agents}
        if cfg.algorithm != "dsm":
            for r, (p, q) in enumerate(topology.edges):
                holder, key = _stack_index(cfg.algorithm, p, q)
                self.duals[holder][key] = float(lam0[r])
                if cfg.algorithm == "pjadmm":
                    self.duals[q][p] = -float(lam0[r])
        self.snapshots: Dict[int, NeighborSnapshot] = {}
        self._exchange()

    @property
    def agents(self) -> range:
        return range(1, self.topology.n + 1)

    # --- messaging ---

    def _send(self, msg: Message) -> None:
        self.mailboxes[msg.receiver].deliver(msg)
        self.messages += 1
        self.links.add((msg.sender, msg.receiver))

    def _broadcast_primal(self, i: int, value: float, iteration: int, to: Sequence[int]) -> None:
        for j in to:
            self._send(Message(sender=i, receiver=j, kind="primal", value=value, iteration=iteration))

    def _send_duals(self) -> None:
        algo = self.cfg.algorithm
        if algo not in ("parallel-admm", "sequential-admm"):
            return
        for i in self.agents:
            for j, lam in self.duals[i].items():
                edge = (min(i, j), max(i, j))
                self._send(Message(sender=i, receiver=j, kind="dual", value=lam, iteration=self.iteration, edge=edge))

    def _collect(self, i: int, iteration: int) -> Tuple[Dict[int, float], Dict[int, float]]:
        xs: Dict[int, float] = {}
        duals: Dict[int, float] = {}
        for msg in self._mailbox_sorted(i):
            if msg.iteration != iteration:
                raise OrderingViolation(
                    f"agent {i} received iteration-{msg.iteration} data while expecting {iteration}",
                    context={"agent": i, "iteration": self.iteration},
                )
            (xs if msg.kind == "primal" else duals)[msg.sender] = msg.value
        return xs, duals

    def _mailbox_sorted(self, i: int) -> List[Message]:
        return sorted(self.mailboxes[i].drain(), key=lambda m: (m.kind, m.sender))

    def _exchange(self) -> None:
        """Every agent sends x_i^k to its neighbors, plus the duals its engine transmits."""
        k = self.iteration
        for i in self.agents:
            self._broadcast_primal(i, self.x[i], k, self.part.neighbors[i])
        self._send_duals()
        for i in self.agents:
            xs, duals = self._collect(i, k)
            self.snapshots[i] = self._snapshot(i, k, xs, duals)

    def _snapshot(self, i: int, k: int, xs: Dict[int, float], duals: Dict[int, float]) -> NeighborSnapshot:
        checks = self.cfg.locality_checks
        return NeighborSnapshot(iteration=k, x=LocalView(i, xs, checks), duals=LocalView(i, duals, checks))

    def state(self, i: int, fresh: Optional[Dict[int, float]] = None) -> AgentState:
        return AgentState(
            agent=i,
            iteration=self.iteration,
            x=self.x[i],
            owned_duals=dict(self.duals[i]),
            snapshot=self.snapshots[i],
            fresh=LocalView(i, fresh or {}, self.cfg.locality_checks),
        )

    # --- stacked views ---

    def stacked_x(self) -> np.ndarray:
        return np.array([self.x[i] for i in self.agents])

    def stacked_duals(self) -> np.ndarray:
        if self.cfg.algorithm == "dsm":
            return np.zeros(0)
        out = []
        for p, q in self.topology.edges:
            holder, key = _stack_index(self.cfg.algorithm, p, q)
            out.append(self.duals[holder][key])
        return np.array(out)

    # --- one iteration per engine ---

    def _order(self) -> List[int]:
        order = list(self.agents)
        if self.cfg.schedule == "reversed":
            order.reverse()
        elif self.cfg.schedule == "shuffled":
            rng = np.random.default_rng([self.cfg.seed, self.iteration])
            order = [int(i) for i in rng.permutation(order)]
        return order

    def _guard(self, i: int, fn: Callable[[], object]):
        try:
            return fn()
        except AdmmError as e:
            raise e.with_context(agent=i)

    def _parallel_phase(self, pool: AgentPool, update) -> Dict[int, float]:
        order = self._order()
        cost = self.costs
        values = pool.map(
            lambda i: self._guard(i, lambda: update(i, self.state(i), cost[i - 1], self.part, self.cfg)), order
        )
        return dict(zip(order, values))

    def step(self, pool: AgentPool) -> None:
        algo = self.cfg.algorithm
        if algo == "parallel-admm":
            x_next = self._parallel_phase(pool, alg.parallel_x_update)
            duals = {i: alg.parallel_dual_update(i, x_next[i], self.state(i), self.cfg) for i in self.agents}
        elif algo == "sequential-admm":
            x_next, duals = self._sequential_sweep()
        elif algo == "pjadmm":
            x_next = self._parallel_phase(pool, alg.pjadmm_x_update)
            fresh = self._share_fresh(x_next)
            duals = {i: alg.pjadmm_dual_update(i, x_next[i], self.state(i, fresh[i]), self.cfg) for i in self.agents}
        elif algo == "dsm":
            k = self.iteration + 1
            order = self._order()
            values = pool.map(
                lambda i: self._guard(
                    i, lambda: alg.dsm_update(i, self.state(i), self.weights[i], k, self.costs[i - 1], self.cfg)
                ),
                order,
            )
            x_next, duals = dict(zip(order, values)), self.duals
        else:
            raise EngineError(f"unknown algorithm {algo!r}")

        self.x = {i: float(x_next[i]) for i in self.agents}
        self.duals = {i: dict(duals[i]) for i in self.agents}
        self.iteration += 1
        self._exchange()

    def _share_fresh(self, x_next: Dict[int, float]) -> Dict[int, Dict[int, float]]:
        k1 = self.iteration + 1
        for i in self.agents:
            self._broadcast_primal(i, x_next[i], k1, self.part.neighbors[i])
        return {i: self._collect(i, k1)[0] for i in self.agents}

    def _sequential_sweep(self) -> Tuple[Dict[int, float], Dict[int, Dict[int, float]]]:
        """Agents update in index order; x_i^{k+1} reaches successors before they start."""
        k1 = self.iteration + 1
        x_next: Dict[int, float] = {}
        fresh: Dict[int, Dict[int, float]] = {}
        for i in self.agents:
            fresh[i] = self._collect(i, k1)[0]
            st = self.state(i, fresh[i])
            x_next[i] = self._guard(i, lambda: alg.sequential_x_update(i, st, self.costs[i - 1], self.part, self.cfg))
            self._broadcast_primal(i, x_next[i], k1, self.part.successors[i])
        duals = {i: alg.sequential_dual_update(i, x_next[i], self.state(i, fresh[i]), self.cfg) for i in self.agents}
        return x_next, duals


def run(
    cfg: RunConfig,
    topology: Topology,
    costs: Sequence[LocalCost],
    *,
    oracle: Optional[OracleSolution] = None,
    x0: Optional[Sequence[float]] = None,
    lam0: Optional[Sequence[float]] = None,
) -> IterationTrace:
    """Run one engine for cfg.max_iter iterations (or until residual < cfg.stop_tol).

    Starts from x0 = 0, lambda0 = 0 unless given.
    """
    log.info(
        "run started",
        extra={
            "algorithm": cfg.algorithm, "n": topology.n, "m": topology.m,
            "rho": cfg.rho, "eps1": cfg.eps1, "eps2": cfg.eps2, "max_iter": cfg.max_iter,
        },
    )
    if cfg.stop_tol is not None and oracle is None:
        oracle = solve_centralized(costs, topology)

    sim = NetworkSim(cfg, topology, costs, x0=x0, lam0=lam0)
    xs = [sim.stacked_x()]
    lams = [sim.stacked_duals()]
    stopped = False
    with AgentPool(cfg.workers) as pool:
        while sim.iteration < cfg.max_iter:
            try:
                sim.step(pool)
            except AdmmError as e:
                raise e.with_context(iteration=sim.iteration, algorithm=cfg.algorithm)
            xs.append(sim.stacked_x())
            lams.append(sim.stacked_duals())
            if cfg.stop_tol is not None and residual(xs[-1], oracle) < cfg.stop_tol:
                stopped = True
                log.info("early stop", extra={"algorithm": cfg.algorithm, "iteration": sim.iteration})
                break

    trace = IterationTrace(
        algorithm=cfg.algorithm,
        xs=np.vstack(xs),
        lams=np.vstack(lams) if lams[0].size else np.zeros((len(xs), 0)),
        stopped_early=stopped,
        messages=sim.messages,
        links=set(sim.links),
    )
    log.info("run completed", extra={"algorithm": cfg.algorithm, "iterations": trace.iterations, "messages": sim.messages})
    return trace


def run_sequential(cfg: RunConfig, topology: Topology, costs: Sequence[LocalCost], **kwargs) -> IterationTrace:
    return run(cfg.model_copy(update={"algorithm": "sequential-admm"}), topology, costs, **kwargs)


# --- trace export ---

def trace_frame(
    trace: IterationTrace,
    topology: Topology,
    costs: Sequence[LocalCost],
    cfg: RunConfig,
    *,
    oracle: Optional[OracleSolution] = None,
    include_duals: bool = True,
    include_metrics: bool = True,
) -> pd.DataFrame:
    """iter, x_1..x_n, lambda_1..lambda_m, residual, cost_gap, consensus_gap, V."""
    cols: Dict[str, object] = {"iter": np.arange(trace.xs.shape[0])}
    for i in range(topology.n):
        cols[f"x_{i + 1}"] = trace.xs[:, i]
    if include_duals:
        for r in range(trace.lams.shape[1]):
            cols[f"lambda_{r + 1}"] = trace.lams[:, r]
    if include_metrics:
        oracle = oracle or solve_centralized(costs, topology)
        inc = build_incidence(topology)
        cols["residual"] = [residual(x, oracle) for x in trace.xs]
        cols["cost_gap"] = [cost_gap(costs, x, oracle) for x in trace.xs]
        cols["consensus_gap"] = [consensus_gap(x, topology) for x in trace.xs]
        if cfg.algorithm == "parallel-admm":
            cols["V"] = [lyapunov(x, lam, oracle, inc, cfg) for x, lam in zip(trace.xs, trace.lams)]
        else:
            cols["V"] = np.nan
    return pd.DataFrame(cols)


def trace_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.17g")
