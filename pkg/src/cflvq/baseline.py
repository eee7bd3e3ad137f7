"""Black-box comparison method: penalized counterfactual cost minimized by Nelder-Mead.

The model is only queried through its distance function, never through the
structure of the nearest-prototype constraints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .engine import DEFAULT_EPSILON, CfRequest, CfResult, TargetOutcome, check_request
from .model import LvqModel
from .regularizers import Regularizer, evaluate


@dataclass(frozen=True)
class BaselineConfig:
    C: float = 10.0
    restarts: int = 3
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iter_per_dim: int = 200
    ftol: float = 1e-6
    init_scale: float = 0.1

    def __post_init__(self):
        if self.C <= 0 or self.restarts < 1:
            raise ValueError("C must be positive and restarts at least 1")
        if not (self.reflection > 0 and self.expansion > max(1.0, self.reflection)
                and 0 < self.contraction < 1 and 0 < self.shrink < 1):
            raise ValueError("simplex coefficients outside the usual Nelder-Mead ranges")


def nelder_mead(f, x0, cfg: BaselineConfig) -> tuple[np.ndarray, float, int]:
    """Minimize ``f`` from an axis-aligned simplex around ``x0``.

    Stops when the spread of function values drops below ``cfg.ftol`` or after
    ``cfg.max_iter_per_dim * len(x0)`` iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = np.vstack([x0, x0 + cfg.init_scale * np.eye(n)])
    fvals = np.array([f(v) for v in simplex])
    it = 0
    for it in range(1, cfg.max_iter_per_dim * n + 1):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if fvals[-1] - fvals[0] <= cfg.ftol:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + cfg.reflection * (centroid - worst)
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + cfg.expansion * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + cfg.contraction * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + cfg.contraction * (worst - centroid)
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + cfg.shrink * (simplex[1:] - simplex[0])
        fvals[1:] = [f(v) for v in simplex[1:]]
    best = int(np.argmin(fvals))
    return simplex[best], float(fvals[best]), it


def baseline_explain(model: LvqModel, x, y_target: int, regularizer: Regularizer,
                     cfg: BaselineConfig | None = None, epsilon: float = DEFAULT_EPSILON) -> CfResult:
    """Minimize ``C * hinge(margin) + theta`` with restarts at growing ``C``.

    ``per_target`` holds one entry per attempt (``index`` is the attempt number);
    ``target_prototype`` is the winning prototype of the returned point.
    """
    cfg = cfg or BaselineConfig()
    t0 = time.perf_counter()
    x = check_request(model, CfRequest(x=np.asarray(x, dtype=float), y_target=y_target,
                                       regularizer=regularizer, epsilon=epsilon))
    right = model.labels == y_target

    def cost(xp, C):
        d = model.distances(xp)
        hinge = max(0.0, d[right].min() - d[~right].min() + epsilon)
        return C * hinge + evaluate(regularizer, xp, x)

    attempts = []
    C = cfg.C
    for k in range(cfg.restarts):
        ta = time.perf_counter()
        xp, _, _ = nelder_mead(lambda v: cost(v, C), x, cfg)
        valid = model.predict(xp) == y_target
        attempts.append(TargetOutcome(index=k, status="optimal" if valid else "invalid",
                                      distance=evaluate(regularizer, xp, x) if valid else None,
                                      wall_time_ms=(time.perf_counter() - ta) * 1e3, x_cf=xp if valid else None))
        if valid:
            return CfResult(x_cf=xp, distance=attempts[-1].distance, target_prototype=model.winner(xp),
                            per_target=attempts, total_wall_time_ms=(time.perf_counter() - t0) * 1e3)
        C *= 10.0
    return CfResult(x_cf=None, distance=None, target_prototype=None, per_target=attempts,
                    total_wall_time_ms=(time.perf_counter() - t0) * 1e3)
