"""Penalty convex-concave procedure for the local-metric programs.

Each nearest-prototype row is a difference of convex quadratics ``f_k - g_k <= 0``
with ``f_k = 1/2 x'L_i x + q_k'x + r_k + eps/2`` and ``g_k = 1/2 x'L_j x``.  Every
outer iteration replaces ``g_k`` by its tangent at the current point, adds a
nonnegative slack per row priced at ``tau``, solves the resulting convex program
and grows ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .constraints import QuadraticConstraint, linearize_concave_part
from .model import LvqModel
from .solver import (MAX_ITERATIONS, NUMERICAL_FAILURE, OPTIMAL, ProgramSpec, QuadRow, SolveOutcome,
                     SolverTolerances, solve)


@dataclass(frozen=True)
class CcpConfig:
    tau0: float = 1.0
    mu: float = 2.0
    tau_max: float = 1e6
    max_outer: int = 50
    slack_tol: float = 1e-6
    obj_tol: float = 1e-6

    def __post_init__(self):
        if self.tau0 <= 0 or self.mu <= 1 or self.tau_max < self.tau0:
            raise ValueError("need tau0 > 0, mu > 1 and tau_max >= tau0")


@dataclass
class DcpProblem:
    """Convex objective program over ``(x', aux)`` plus the DC rows on ``x'``.

    ``theta`` maps ``x'`` to the objective value the program minimizes.
    """

    base: ProgramSpec
    rows: list[QuadraticConstraint]
    epsilon: float
    theta: Callable[[np.ndarray], float]

    def violation(self, x) -> np.ndarray:
        return np.array([c.convex_part(x, self.epsilon) - c.concave_part(x) for c in self.rows])


@dataclass
class CcpTrace:
    """Per-outer-iteration diagnostics.

    ``penalized`` holds ``(tau, V(x_k), V(x_k+1))`` where ``V`` is
    ``theta + tau * sum(max(0, f - g))`` at that iteration's ``tau``.
    """

    penalized: list[tuple[float, float, float]] = field(default_factory=list)
    slack_sums: list[float] = field(default_factory=list)
    max_minorant_gap: float = -np.inf

    def monotone(self, tol: float = 1e-9) -> bool:
        return all(after <= before + tol for _, before, after in self.penalized)


@dataclass
class CcpOutcome(SolveOutcome):
    trace: CcpTrace = field(default_factory=CcpTrace)


def suggest(model: LvqModel, target: int) -> np.ndarray:
    """Initial point: the target prototype itself."""
    return model.prototypes[target].w.copy()


def _penalized(problem: DcpProblem, x, tau: float) -> float:
    return problem.theta(x) + tau * float(np.maximum(problem.violation(x), 0.0).sum())


def _subproblem(problem: DcpProblem, x_k: np.ndarray, tau: float) -> ProgramSpec:
    """Convexified program over ``(x', aux, slack_1..m, u)``.

    Every row shares the convex part ``1/2 x'L_i x``, so it is written once as
    ``1/2 x'L_i x <= u`` and the rows become linear in ``(x', u, slack)``.
    """
    base = problem.base
    n0, d, m = base.n, base.nx, len(problem.rows)
    curved = any(np.any(c.Q) for c in problem.rows)
    n = n0 + m + (1 if curved else 0)
    extra = n - n0

    def widen(M):
        return None if M is None else np.hstack([M, np.zeros((M.shape[0], extra))])

    P = None
    if base.P is not None:
        P = np.zeros((n, n))
        P[:n0, :n0] = base.P
    lb = np.concatenate([base.lb if base.lb is not None else np.full(n0, -np.inf), np.zeros(m),
                         np.full(extra - m, -np.inf)])
    ub = np.concatenate([base.ub if base.ub is not None else np.full(n0, np.inf), np.full(extra, np.inf)])
    spec = ProgramSpec(n=n, nx=d, c=np.concatenate([base.c, np.full(m, tau), np.zeros(extra - m)]), P=P,
                       A=widen(base.A), b=base.b, G=widen(base.G), h=base.h, lb=lb, ub=ub,
                       quad=tuple(replace(r, P=np.pad(r.P, ((0, extra), (0, extra))),
                                          q=np.concatenate([r.q, np.zeros(extra)])) for r in base.quad))
    G = np.zeros((m, n))
    h = np.empty(m)
    for k, c in enumerate(problem.rows):
        G[k, n0 + k] = -1.0
        if not np.any(c.Q):
            # equal metrics: f - g is affine, no linearization needed
            G[k, :d] = c.q
            h[k] = -(c.r + 0.5 * problem.epsilon)
            continue
        rho, r_tilde = linearize_concave_part(c.lam_j, x_k)
        G[k, :d] = c.q - rho
        G[k, n - 1] = 1.0
        h[k] = -(c.r + 0.5 * problem.epsilon - r_tilde)
    spec = spec.add_ineq(G, h)
    if curved:
        lam_i = next(c.lam_i for c in problem.rows if np.any(c.Q))
        P_u = np.zeros((n, n))
        P_u[:d, :d] = lam_i
        q_u = np.zeros(n)
        q_u[n - 1] = -1.0
        spec = spec.add_quad([QuadRow(P=P_u, q=q_u, r=0.0)])
    return spec


def _warm_start(problem: DcpProblem, x_k: np.ndarray) -> np.ndarray:
    base = problem.base
    m = len(problem.rows)
    curved = any(np.any(c.Q) for c in problem.rows)
    z = np.zeros(base.n + m + (1 if curved else 0))
    z[: base.nx] = x_k
    if base.n > base.nx:
        # epigraph variables: start strictly above |U(x_k - x)|
        G = base.G[: 2 * base.nx, : base.nx]
        z[base.nx: base.n] = np.abs(G[: base.nx] @ x_k - base.h[: base.nx]) + 1.0
    z[base.n: base.n + m] = np.maximum(problem.violation(x_k), 0.0) + 1.0
    if curved:
        lam_i = next(c.lam_i for c in problem.rows if np.any(c.Q))
        z[-1] = 0.5 * x_k @ lam_i @ x_k
    return z


def _convex_case(problem: DcpProblem, x_k, cfg: CcpConfig, tol, trace: CcpTrace) -> CcpOutcome:
    """Equal metrics on every row: the rows are affine, one exact solve suffices."""
    base, d = problem.base, problem.base.nx
    G = np.zeros((len(problem.rows), base.n))
    h = np.empty(len(problem.rows))
    for k, c in enumerate(problem.rows):
        G[k, :d] = c.q
        h[k] = -(c.r + 0.5 * problem.epsilon)
    out = solve(base.add_ineq(G, h), tol)
    if not out.ok:
        return CcpOutcome(status=out.status, iterations=1, message=out.message, trace=trace)
    x_new = out.z[:d]
    trace.penalized.append((cfg.tau0, _penalized(problem, x_k, cfg.tau0), _penalized(problem, x_new, cfg.tau0)))
    trace.slack_sums.append(0.0)
    return CcpOutcome(status=OPTIMAL, z=out.z, objective_value=problem.theta(x_new), iterations=1,
                      max_violation=float(np.max(problem.violation(x_new), initial=0.0)), duals=out.duals,
                      message="affine rows, solved directly", trace=trace)


def first_subproblem(problem: DcpProblem, x0, cfg: CcpConfig | None = None) -> ProgramSpec:
    cfg = cfg or CcpConfig()
    return _subproblem(problem, np.asarray(x0, dtype=float), cfg.tau0)


def improve(problem: DcpProblem, x0, cfg: CcpConfig | None = None,
            tol: SolverTolerances | None = None) -> CcpOutcome:
    cfg = cfg or CcpConfig()
    x_k = np.asarray(x0, dtype=float).copy()
    d = problem.base.nx
    trace = CcpTrace()
    if not any(np.any(c.Q) for c in problem.rows):
        return _convex_case(problem, x_k, cfg, tol, trace)
    tau = cfg.tau0
    prev_obj = None
    total_iters = 0
    last = None
    for outer in range(1, cfg.max_outer + 1):
        spec = _subproblem(problem, x_k, tau)
        out = solve(spec, tol, z0=_warm_start(problem, x_k))
        total_iters += out.iterations
        if not out.ok:
            return CcpOutcome(status=out.status if out.status != OPTIMAL else NUMERICAL_FAILURE,
                              iterations=outer, message=f"subproblem failed at outer iteration {outer}: "
                              f"{out.status} ({out.message})", trace=trace)
        x_new = out.z[:d]
        for c in problem.rows:
            if np.any(c.Q):
                rho, r_tilde = linearize_concave_part(c.lam_j, x_k)
                trace.max_minorant_gap = max(trace.max_minorant_gap,
                                             float(rho @ x_new + r_tilde) - c.concave_part(x_new),
                                             float(rho @ x_k + r_tilde) - c.concave_part(x_k))
        trace.penalized.append((tau, _penalized(problem, x_k, tau), _penalized(problem, x_new, tau)))
        slack = float(out.z[problem.base.n: problem.base.n + len(problem.rows)].sum())
        trace.slack_sums.append(slack)
        obj = problem.theta(x_new)
        last = (x_new, out)
        x_k = x_new
        done = slack <= cfg.slack_tol and prev_obj is not None and abs(prev_obj - obj) <= cfg.obj_tol
        prev_obj = obj
        if done:
            break
        tau = min(cfg.mu * tau, cfg.tau_max)
    x_final, out = last
    viol = float(np.max(problem.violation(x_final), initial=0.0))
    status = OPTIMAL if viol <= cfg.slack_tol and trace.slack_sums[-1] <= cfg.slack_tol else MAX_ITERATIONS
    return CcpOutcome(status=status, z=out.z, objective_value=problem.theta(x_final), iterations=len(trace.slack_sums),
                      max_violation=viol, duals=out.duals,
                      message=f"{len(trace.slack_sums)} outer iterations, {total_iters} interior-point iterations",
                      trace=trace)
