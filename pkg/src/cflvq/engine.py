"""Counterfactual search: one convex (or DC) program per prototype of the requested class."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ccp
from .constraints import (UserConstraints, apply_user_constraints, linear_constraints,
                          quadratic_constraints)
from .model import LvqModel, ModelError
from .regularizers import Regularizer, build_objective, evaluate
from .solver import OPTIMAL, ProgramSpec, SolverTolerances, solve

DEFAULT_EPSILON = 1e-4
TIE_TOL = 1e-12
# slack allowed on the epsilon margin when re-checking a solution against the model
MARGIN_TOL = 1e-6


class RequestError(ValueError):
    pass


@dataclass(frozen=True)
class CfRequest:
    x: np.ndarray
    y_target: int
    regularizer: Regularizer
    epsilon: float = DEFAULT_EPSILON
    user_constraints: UserConstraints = field(default_factory=UserConstraints)
    parallel: bool = False


@dataclass
class TargetOutcome:
    index: int
    status: str
    distance: float | None
    wall_time_ms: float
    x_cf: np.ndarray | None = None
    message: str = ""
    ccp_trace: ccp.CcpTrace | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "status": self.status, "distance": self.distance,
                "wall_time_ms": self.wall_time_ms}


@dataclass
class CfResult:
    x_cf: np.ndarray | None
    distance: float | None
    target_prototype: int | None
    per_target: list[TargetOutcome]
    total_wall_time_ms: float

    @property
    def success(self) -> bool:
        return self.x_cf is not None

    def to_dict(self) -> dict:
        return {
            "x_cf": None if self.x_cf is None else self.x_cf.tolist(),
            "distance": self.distance,
            "target_prototype": self.target_prototype,
            "per_target": [t.to_dict() for t in self.per_target],
            "total_wall_time_ms": self.total_wall_time_ms,
        }


def margin(model: LvqModel, x, y_target: int) -> float:
    """``min d(x, wrong label) - min d(x, right label)``; a valid counterfactual has this >= eps."""
    d = model.distances(x)
    labels = model.labels
    return float(d[labels != y_target].min() - d[labels == y_target].min())


def check_request(model: LvqModel, req: CfRequest) -> np.ndarray:
    try:
        x = model.check_input(req.x)
    except ModelError as exc:
        raise RequestError(str(exc)) from exc
    if not model.indices_with_label(req.y_target):
        raise RequestError(f"label {req.y_target} is not a prototype label of the model")
    if req.epsilon <= 0:
        raise RequestError("epsilon must be positive")
    try:
        req.user_constraints.check_dim(model.dim)
    except ValueError as exc:
        raise RequestError(str(exc)) from exc
    if req.regularizer.kind == "manhattan" and req.regularizer.alpha.size != model.dim:
        raise RequestError(f"regularizer weights have length {req.regularizer.alpha.size}, model dimension is {model.dim}")
    if req.regularizer.kind == "gl2" and req.regularizer.lam.shape[0] != model.dim:
        raise RequestError("regularizer matrix does not match the model dimension")
    return x


def _theta_fn(reg: Regularizer, x: np.ndarray, base):
    if reg.kind == "manhattan":
        return lambda xp: evaluate(reg, xp, x)
    return lambda xp: base.objective(xp)


def solve_target(model: LvqModel, req: CfRequest, target: int, tol: SolverTolerances | None = None,
                 ccp_config: ccp.CcpConfig | None = None) -> TargetOutcome:
    """Solve the program that forces prototype ``target`` to be the winner."""
    t0 = time.perf_counter()
    x = np.asarray(req.x, dtype=float)
    uc = req.user_constraints
    eps = req.epsilon
    d = model.dim
    trace = None

    def done(status, xcf=None, message=""):
        dist = None if xcf is None else evaluate(req.regularizer, xcf, x)
        return TargetOutcome(index=target, status=status, distance=dist, x_cf=xcf, message=message,
                             wall_time_ms=(time.perf_counter() - t0) * 1e3, ccp_trace=trace)

    if model.metric == "local":
        rows = quadratic_constraints(model, target, eps)
    else:
        rows = linear_constraints(model, target, eps)
    if any(r.degenerate for r in rows):
        return done("degenerate", message="target coincides with a wrong-label prototype")

    # x itself already satisfies this program: it is the minimizer (theta = 0)
    if all(r.value(x, eps) <= 0 for r in rows) and uc.satisfied(x, tol=0.0, x_orig=x):
        return done(OPTIMAL, x.copy())

    base = apply_user_constraints(build_objective(req.regularizer, x), uc, x)
    if model.metric == "local":
        problem = ccp.DcpProblem(base=base, rows=rows, epsilon=eps, theta=_theta_fn(req.regularizer, x, base))
        out = ccp.improve(problem, ccp.suggest(model, target), ccp_config, tol)
        trace = out.trace
    else:
        G = np.zeros((len(rows), base.n))
        h = np.empty(len(rows))
        for k, r in enumerate(rows):
            G[k, :d], h[k] = r.row(eps)
        out = solve(base.add_ineq(G, h), tol)
    if not out.ok:
        return done(out.status, message=out.message)

    xcf = out.z[:d].copy()
    if uc.frozen:
        idx = list(uc.frozen)
        xcf[idx] = x[idx]
    if model.predict(xcf) != req.y_target or margin(model, xcf, req.y_target) < eps - MARGIN_TOL:
        return done("invalid", message="solution failed the model re-check")
    return done(OPTIMAL, xcf, out.message)


def target_program(model: LvqModel, req: CfRequest, target: int) -> ProgramSpec:
    """The program :func:`solve_target` hands to the solver for ``target``.

    For local metrics this is the first convexified subproblem, linearized at
    the starting point.
    """
    x = check_request(model, req)
    eps = req.epsilon
    base = apply_user_constraints(build_objective(req.regularizer, x), req.user_constraints, x)
    if model.metric == "local":
        problem = ccp.DcpProblem(base=base, rows=quadratic_constraints(model, target, eps), epsilon=eps,
                                 theta=_theta_fn(req.regularizer, x, base))
        return ccp.first_subproblem(problem, ccp.suggest(model, target))
    rows = linear_constraints(model, target, eps)
    G = np.zeros((len(rows), base.n))
    h = np.empty(len(rows))
    for k, r in enumerate(rows):
        G[k, :model.dim], h[k] = r.row(eps)
    return base.add_ineq(G, h)


def _reduce(model: LvqModel, outcomes: list[TargetOutcome], t0: float) -> CfResult:
    best = None
    for o in sorted(outcomes, key=lambda o: o.index):
        if o.status != OPTIMAL:
            continue
        if best is None or o.distance < best.distance - TIE_TOL:
            best = o
    total = (time.perf_counter() - t0) * 1e3
    if best is None:
        return CfResult(x_cf=None, distance=None, target_prototype=None, per_target=outcomes,
                        total_wall_time_ms=total)
    return CfResult(x_cf=best.x_cf, distance=best.distance, target_prototype=best.index, per_target=outcomes,
                    total_wall_time_ms=total)


def _run(model, req, targets, tol, ccp_config) -> list[TargetOutcome]:
    if req.parallel and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=min(len(targets), 8)) as pool:
            return list(pool.map(lambda i: solve_target(model, req, i, tol, ccp_config), targets))
    return [solve_target(model, req, i, tol, ccp_config) for i in targets]


def explain(model: LvqModel, req: CfRequest, tol: SolverTolerances | None = None,
            ccp_config: ccp.CcpConfig | None = None) -> CfResult:
    """Closest counterfactual over all prototypes labeled ``req.y_target``.

    Returns a result with ``x_cf=None`` when no target program yields a valid point.
    """
    t0 = time.perf_counter()
    check_request(model, req)
    return _reduce(model, _run(model, req, model.indices_with_label(req.y_target), tol, ccp_config), t0)


def explain_with_nearest_fallback(model: LvqModel, req: CfRequest, tol: SolverTolerances | None = None,
                                  ccp_config: ccp.CcpConfig | None = None) -> CfResult:
    """Same result as :func:`explain`, trying targets nearest to ``x`` first (no pruning)."""
    t0 = time.perf_counter()
    x = check_request(model, req)
    targets = sorted(model.indices_with_label(req.y_target), key=lambda i: (model.distance(x, i), i))
    return _reduce(model, _run(model, req, targets, tol, ccp_config), t0)
