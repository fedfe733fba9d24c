from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize

from app.contracts.models import CertificateSummary, RunConfig
from app.errors import NoStationaryPoint, SingularInstance, ZeroOptimum
from app.services.costs import LeastSquaresCost, LocalCost, global_cost
from app.services.graph import IncidenceSet, Topology, build_incidence
from app.settings import settings

log = logging.getLogger(__name__)

CERTIFICATE_COLUMNS = ["k", "V", "descent_slack", "residual", "consensus_gap", "cost_gap"]

# consensus probes around x*, as multiples of max(1, |x*|)
VI_PROBE_OFFSETS = (-1.0, -0.1, -0.01, 0.0, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class OracleSolution:
    """Centralized ground truth. Duals follow L(x, lambda) = F(x) - lambda^T A x,
    so stationarity reads A^T lambda* = g with g_i = f_i'(x*)."""

    x_star: float
    x_star_vec: np.ndarray
    lambda_star: np.ndarray
    F_star: float
    F_star_scaled: float

    @property
    def n(self) -> int:
        return int(self.x_star_vec.shape[0])


def _stationary_point(costs: Sequence[LocalCost], budget: int = 200) -> float:
    def g(x: float) -> float:
        return math.fsum(f.subgradient(x) for f in costs)

    width = 1.0
    for _ in range(budget):
        lo, hi = -width, width
        glo, ghi = g(lo), g(hi)
        if glo == 0.0:
            return lo
        if ghi == 0.0:
            return hi
        if glo < 0.0 < ghi:
            return float(optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000))
        width *= 2.0
    raise NoStationaryPoint("sum of subgradients never changes sign", context={"width": width})


def solve_centralized(costs: Sequence[LocalCost], topology: Optional[Topology] = None) -> OracleSolution:
    n = len(costs)
    if all(isinstance(f, LeastSquaresCost) for f in costs):
        den = math.fsum(f.M * f.M for f in costs)
        if den == 0.0:
            raise SingularInstance("all measurement gains are zero", context={"n": n})
        x_star = math.fsum(f.M * f.y for f in costs) / den
    elif all(f.quadratic is not None for f in costs):
        a = math.fsum(f.quadratic[0] for f in costs)
        if a == 0.0:
            raise SingularInstance("summed curvature is zero", context={"n": n})
        x_star = -math.fsum(f.quadratic[1] for f in costs) / (2.0 * a)
    else:
        x_star = _stationary_point(costs)

    x_vec = np.full(n, x_star)
    F_star = global_cost(costs, x_vec)
    g = np.array([f.subgradient(x_star) for f in costs])
    if abs(math.fsum(g)) > 1e-8 * max(1.0, float(np.abs(g).max(initial=0.0))):
        log.warning("oracle stationarity is loose", extra={"sum_subgradient": math.fsum(g)})

    if topology is None:
        lam = np.zeros(0)
    else:
        inc = build_incidence(topology)
        lam = np.linalg.lstsq(inc.A.T, g, rcond=None)[0]
    lam.setflags(write=False)
    x_vec.setflags(write=False)
    return OracleSolution(x_star=x_star, x_star_vec=x_vec, lambda_star=lam, F_star=F_star, F_star_scaled=F_star / n)


# --- per-iterate metrics ---

def residual_mode(oracle: OracleSolution) -> str:
    return "absolute" if oracle.x_star == 0.0 else "relative"


def residual(x: np.ndarray, oracle: OracleSolution, *, strict: bool = False) -> float:
    """||x - x*1|| / ||x*1||; absolute error when x* is exactly zero (strict raises)."""
    err = float(np.linalg.norm(np.asarray(x, dtype=float) - oracle.x_star_vec))
    if oracle.x_star == 0.0:
        if strict:
            raise ZeroOptimum("optimum is exactly zero; relative residual undefined")
        return err
    return err / float(np.linalg.norm(oracle.x_star_vec))


def consensus_gap(x: np.ndarray, topology: Topology) -> float:
    if not topology.edges:
        return 0.0
    return max(abs(float(x[p - 1]) - float(x[q - 1])) for p, q in topology.edges)


def cost_gap(costs: Sequence[LocalCost], x: np.ndarray, oracle: OracleSolution) -> float:
    """F(x) - F(x*), unscaled."""
    return global_cost(costs, x) - oracle.F_star


def iterations_to_threshold(residuals: Sequence[float], threshold: float) -> Optional[int]:
    """First k with residual < threshold, None when never reached."""
    below = np.flatnonzero(np.asarray(residuals, dtype=float) < threshold)
    return int(below[0]) if below.size else None


# --- Lyapunov certificates (parallel ADMM) ---

def lyapunov(
    x: np.ndarray,
    lam: np.ndarray,
    oracle: OracleSolution,
    inc: IncidenceSet,
    cfg: RunConfig,
    *,
    eps_scale: float = 1.0,
    with_lambda_star: bool = True,
) -> float:
    rho = cfg.rho
    d = np.asarray(x, dtype=float) - oracle.x_star_vec
    r = np.asarray(lam, dtype=float) - rho * (inc.E @ x)
    if with_lambda_star:
        r = r - oracle.lambda_star
    Ed, Bd = inc.E @ d, inc.B @ d
    return float(
        r @ r / (2.0 * rho)
        + (2.0 + eps_scale * cfg.eps1) * rho * (Ed @ Ed)
        + eps_scale * cfg.eps2 * rho * (Bd @ Bd)
    )


def descent_slack(
    x_k: np.ndarray,
    lam_k: np.ndarray,
    x_next: np.ndarray,
    lam_next: np.ndarray,
    oracle: OracleSolution,
    inc: IncidenceSet,
    cfg: RunConfig,
    *,
    eps_scale: float = 1.0,
) -> float:
    """V^k - V^{k+1} minus the per-step decrease the convergence argument demands."""
    rho = cfg.rho
    s1, s2 = eps_scale * cfg.eps1, eps_scale * cfg.eps2
    d = np.asarray(x_next, dtype=float) - np.asarray(x_k, dtype=float)
    Ed, Bd = inc.E @ d, inc.B @ d
    w = 2.0 * Ed - inc.A @ x_next
    v_k = lyapunov(x_k, lam_k, oracle, inc, cfg, eps_scale=eps_scale)
    v_next = lyapunov(x_next, lam_next, oracle, inc, cfg, eps_scale=eps_scale)
    return float(v_k - v_next - 0.5 * rho * (w @ w) - s1 * rho * (Ed @ Ed) - s2 * rho * (Bd @ Bd))


def ergodic_bound_check(
    xs: np.ndarray,
    lams: np.ndarray,
    costs: Sequence[LocalCost],
    oracle: OracleSolution,
    inc: IncidenceSet,
    cfg: RunConfig,
) -> np.ndarray:
    """margin_s = V0bar / s - (F(xbar^s) - F*) for s = 1..K, xbar^s the mean of x^1..x^s."""
    if xs.shape[0] < 2:
        return np.zeros(0)
    v0 = lyapunov(xs[0], lams[0], oracle, inc, cfg, with_lambda_star=False)
    s = np.arange(1, xs.shape[0])
    xbar = np.cumsum(xs[1:], axis=0) / s[:, None]
    gaps = np.array([global_cost(costs, row) - oracle.F_star for row in xbar])
    return v0 / s - gaps


def implied_subgradient(
    x_k: np.ndarray, lam_k: np.ndarray, x_next: np.ndarray, inc: IncidenceSet, cfg: RunConfig
) -> np.ndarray:
    """Subgradient of F at x^{k+1} selected by the parallel x-update's optimality condition."""
    rho = cfg.rho
    A, B, E = inc.A, inc.B, inc.E
    d = x_next - x_k
    curvature = (3.0 + 2.0 * cfg.eps1) * (E.T @ E) + (1.0 + 2.0 * cfg.eps2) * (B.T @ B)
    return A.T @ lam_k - rho * ((E.T @ A + A.T @ A) @ x_k) - rho * (curvature @ d)


def monotonicity_margin(
    x_k: np.ndarray, lam_k: np.ndarray, x_next: np.ndarray, oracle: OracleSolution, inc: IncidenceSet, cfg: RunConfig
) -> float:
    """(h - A^T lambda*)^T (x^{k+1} - x*1), non-negative for any convex F."""
    h = implied_subgradient(x_k, lam_k, x_next, inc, cfg)
    return float((h - inc.A.T @ oracle.lambda_star) @ (x_next - oracle.x_star_vec))


def vi_residual(
    x: np.ndarray,
    lam: Optional[np.ndarray],
    oracle: OracleSolution,
    inc: IncidenceSet,
    costs: Sequence[LocalCost],
) -> float:
    """Largest violation of F(xhat 1) - F(x) + lamhat^T A x >= 0 over a finite probe set."""
    x = np.asarray(x, dtype=float)
    F_x = global_cost(costs, x)
    scale = max(1.0, abs(oracle.x_star))
    probes_x = [oracle.x_star + off * scale for off in VI_PROBE_OFFSETS] + [float(np.mean(x))]
    Ax = inc.A @ x
    probes_lam = [oracle.lambda_star, oracle.lambda_star + Ax, oracle.lambda_star - Ax]
    if lam is not None and np.size(lam) == inc.A.shape[0]:
        probes_lam.append(np.asarray(lam, dtype=float))
    n = x.shape[0]
    worst = 0.0
    for xh in probes_x:
        F_hat = global_cost(costs, np.full(n, xh))
        for lh in probes_lam:
            worst = max(worst, -(F_hat - F_x + float(lh @ Ax)))
    return worst


# --- report ---

@dataclass
class CertificateReport:
    frame: pd.DataFrame
    ergodic_margins: np.ndarray
    summary: CertificateSummary

    def to_csv(self) -> str:
        return self.frame[CERTIFICATE_COLUMNS].to_csv(index=False, float_format="%.17g")


def _min_or_none(values: np.ndarray) -> Optional[float]:
    values = values[np.isfinite(values)]
    return float(values.min()) if values.size else None


def certificate_report(
    xs: np.ndarray,
    lams: np.ndarray,
    costs: Sequence[LocalCost],
    oracle: OracleSolution,
    topology: Topology,
    cfg: RunConfig,
    *,
    tol: Optional[float] = None,
) -> CertificateReport:
    """Per-iteration metrics plus the run's certificate summary.

    Lyapunov, ergodic and monotonicity certificates only apply to parallel ADMM;
    other engines report metrics and the final VI residual.
    """
    tol = settings.CERT_TOL if tol is None else tol
    inc = build_incidence(topology)
    K = xs.shape[0] - 1
    lyap = cfg.algorithm == "parallel-admm"

    V = np.full(K + 1, np.nan)
    slack = np.full(K + 1, np.nan)
    slack_half = np.full(K + 1, np.nan)
    mono = np.full(K + 1, np.nan)
    if lyap:
        for k in range(K + 1):
            V[k] = lyapunov(xs[k], lams[k], oracle, inc, cfg)
        for k in range(K):
            slack[k] = descent_slack(xs[k], lams[k], xs[k + 1], lams[k + 1], oracle, inc, cfg)
            slack_half[k] = descent_slack(xs[k], lams[k], xs[k + 1], lams[k + 1], oracle, inc, cfg, eps_scale=0.5)
            mono[k] = monotonicity_margin(xs[k], lams[k], xs[k + 1], oracle, inc, cfg)

    frame = pd.DataFrame(
        {
            "k": np.arange(K + 1),
            "V": V,
            "descent_slack": slack,
            "residual": [residual(x, oracle) for x in xs],
            "consensus_gap": [consensus_gap(x, topology) for x in xs],
            "cost_gap": [cost_gap(costs, x, oracle) for x in xs],
        }
    )
    margins = ergodic_bound_check(xs, lams, costs, oracle, inc, cfg) if lyap else np.zeros(0)
    final_lam = lams[-1] if lams.shape[1] == topology.m else None

    def verdict(v: Optional[float]) -> Optional[bool]:
        return None if v is None else v >= -tol

    d_min, d_half = _min_or_none(slack), _min_or_none(slack_half)
    e_min, m_min = _min_or_none(margins), _min_or_none(mono)
    summary = CertificateSummary(
        algorithm=cfg.algorithm,
        iterations=K,
        final_residual=float(frame["residual"].iloc[-1]),
        residual_mode=residual_mode(oracle),
        final_consensus_gap=float(frame["consensus_gap"].iloc[-1]),
        final_cost_gap=float(frame["cost_gap"].iloc[-1]),
        descent_min_slack=d_min,
        descent_pass=verdict(d_min),
        descent_min_slack_half_eps=d_half,
        descent_pass_half_eps=verdict(d_half),
        ergodic_min_margin=e_min,
        ergodic_pass=verdict(e_min),
        monotonicity_min=m_min,
        monotonicity_pass=verdict(m_min),
        vi_residual=vi_residual(xs[-1], final_lam, oracle, inc, costs),
        tolerance=tol,
    )
    if summary.residual_mode == "absolute":
        log.warning("optimum is zero; residual column holds absolute error", extra={"algorithm": cfg.algorithm})
    return CertificateReport(frame=frame, ergodic_margins=margins, summary=summary)
