from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
from scipy import optimize

from app.errors import BracketFailure, NonPositiveWeight, SolverError

log = logging.getLogger(__name__)

Quadratic = Tuple[float, float, float]


@runtime_checkable
class LocalCost(Protocol):
    """A private convex scalar cost f_i."""

    kind: str

    def evaluate(self, x: float) -> float: ...

    def subgradient(self, x: float) -> float: ...

    @property
    def quadratic(self) -> Optional[Quadratic]:
        """(a, b, c) with f(x) = a*x^2 + b*x + c when f is quadratic, else None."""
        ...


@dataclass(frozen=True)
class QuadraticCost:
    a: float
    b: float
    c: float = 0.0
    kind: str = "quadratic"

    def __post_init__(self) -> None:
        if self.a < 0:
            raise SolverError(f"quadratic cost needs a >= 0 for convexity, got a={self.a}")

    def evaluate(self, x: float) -> float:
        return self.a * x * x + self.b * x + self.c

    def subgradient(self, x: float) -> float:
        return 2.0 * self.a * x + self.b

    @property
    def quadratic(self) -> Optional[Quadratic]:
        return (self.a, self.b, self.c)


@dataclass(frozen=True)
class LeastSquaresCost:
    """f(x) = 1/2 (M x - y)^2 for one scalar measurement y = M x + e."""

    M: float
    y: float
    kind: str = "least_squares"

    def evaluate(self, x: float) -> float:
        r = self.M * x - self.y
        return 0.5 * r * r

    def subgradient(self, x: float) -> float:
        return self.M * (self.M * x - self.y)

    @property
    def quadratic(self) -> Optional[Quadratic]:
        return (0.5 * self.M * self.M, -self.M * self.y, 0.5 * self.y * self.y)


@dataclass(frozen=True)
class HuberCost:
    """Robust sensing cost: Huber loss of the measurement residual M x - y."""

    M: float
    y: float
    delta: float = 1.0
    kind: str = "huber"

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise SolverError(f"huber threshold must be positive, got {self.delta}")

    def evaluate(self, x: float) -> float:
        r = self.M * x - self.y
        if abs(r) <= self.delta:
            return 0.5 * r * r
        return self.delta * (abs(r) - 0.5 * self.delta)

    def subgradient(self, x: float) -> float:
        r = self.M * x - self.y
        return self.M * min(max(r, -self.delta), self.delta)

    @property
    def quadratic(self) -> Optional[Quadratic]:
        return None


@dataclass(frozen=True)
class ScalarSubproblem:
    """min_x f(x) + linear*x + sum_t w_t (x - c_t)^2, with every w_t > 0.

    Every x-update of the ADMM engines is assembled into this form.
    """

    cost: LocalCost
    linear: float
    anchors: Tuple[Tuple[float, float], ...]

    @property
    def quad(self) -> float:
        return math.fsum(w for w, _ in self.anchors)

    def objective(self, x: float) -> float:
        return self.cost.evaluate(x) + self.linear * x + math.fsum(w * (x - c) ** 2 for w, c in self.anchors)

    def derivative(self, x: float) -> float:
        return self.cost.subgradient(x) + self.linear + math.fsum(2.0 * w * (x - c) for w, c in self.anchors)


def _check_weights(p: ScalarSubproblem) -> None:
    for w, c in p.anchors:
        if not w > 0 or not math.isfinite(w):
            raise NonPositiveWeight(f"anchor weight must be positive, got {w}", context={"center": c})
    q = p.cost.quadratic
    if not p.anchors and not (q is not None and q[0] > 0):
        raise SolverError("subproblem is not strictly convex: no anchors and no curvature in the cost")


def _closed_form(p: ScalarSubproblem, q: Quadratic) -> float:
    a, b, _ = q
    num = math.fsum([2.0 * w * c for w, c in p.anchors] + [-b, -p.linear])
    den = 2.0 * a + 2.0 * p.quad
    return num / den


def _expand_bracket(phi: Callable[[float], float], center: float, budget: int) -> Tuple[float, float]:
    width = max(1.0, abs(center))
    for _ in range(budget):
        lo, hi = center - width, center + width
        if phi(lo) <= 0.0 <= phi(hi):
            return lo, hi
        width *= 2.0
    raise BracketFailure(
        "derivative keeps one sign over the whole expansion budget (unbounded or non-convex cost?)",
        context={"center": center, "width": width},
    )


def solve_subproblem(
    p: ScalarSubproblem,
    tol: float,
    *,
    method: Literal["auto", "bisect"] = "auto",
    expansion_budget: int = 200,
) -> float:
    """Minimizer of a strictly convex scalar subproblem.

    Quadratic costs use the linear stationarity equation; anything else (or
    method="bisect") runs derivative-sign bisection on a bracket doubled out
    from the anchor-weighted mean.
    """
    if not tol > 0:
        raise SolverError(f"tolerance must be positive, got {tol}")
    _check_weights(p)

    q = p.cost.quadratic
    if method == "auto" and q is not None:
        return _closed_form(p, q)

    if p.anchors:
        center = math.fsum(w * c for w, c in p.anchors) / p.quad
    else:
        center = 0.0
    lo, hi = _expand_bracket(p.derivative, center, expansion_budget)
    if p.derivative(lo) == 0.0:
        return lo
    if p.derivative(hi) == 0.0:
        return hi
    x = optimize.bisect(p.derivative, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=4000)
    x = float(x)
    res = abs(p.derivative(x))
    if res > tol * max(1.0, abs(x)):
        # a kink of f: 0 lies inside the subdifferential but no single subgradient vanishes
        log.debug("bisection stopped at a kink", extra={"x": x, "derivative": res})
    return x


# --- least-squares benchmark instance ---

@dataclass(frozen=True)
class LsInstance:
    costs: Tuple[LeastSquaresCost, ...]
    signal: float
    seed: int
    noiseless: bool = False


def draw_ls_instance(n: int, seed: int, *, noiseless: bool = False) -> LsInstance:
    """y_i = M_i * s + e_i with M_i, e_i, s ~ N(0, 1).

    Streams are split with SeedSequence.spawn: child 0 draws the signal s,
    child i draws (M_i, e_i) for agent i, so agent i's data does not depend on n.
    """
    if n < 2:
        raise SolverError(f"an instance needs at least two agents, got n={n}")
    children = np.random.SeedSequence(seed).spawn(n + 1)
    signal = float(np.random.default_rng(children[0]).standard_normal())
    costs: List[LeastSquaresCost] = []
    for i in range(1, n + 1):
        rng = np.random.default_rng(children[i])
        M, e = rng.standard_normal(2)
        if noiseless:
            e = 0.0
        costs.append(LeastSquaresCost(M=float(M), y=float(M * signal + e)))
    return LsInstance(costs=tuple(costs), signal=signal, seed=seed, noiseless=noiseless)


def generate_ls_instance(n: int, seed: int) -> List[LeastSquaresCost]:
    return list(draw_ls_instance(n, seed).costs)


def global_cost(costs: Sequence[LocalCost], x: Sequence[float]) -> float:
    """F(x) = sum_i f_i(x_i), unscaled."""
    return math.fsum(f.evaluate(float(xi)) for f, xi in zip(costs, x))
