"""Nearest-prototype feasibility constraints and user plausibility constraints.

For a target prototype ``i`` and every prototype ``j`` with a different label,
``d(x', p_i) + eps <= d(x', p_j)`` is rewritten with

    Q_ij = L_i - L_j,   q_ij = L_j p_j - L_i p_i,   r_ij = (p_i'L_i p_i - p_j'L_j p_j) / 2

so that ``d(x', p_i) - d(x', p_j) = x'Q_ij x' + 2 q_ij'x' + 2 r_ij``.  Rows handed to
the solver are that identity divided by two, i.e. ``1/2 x'Qx' + q'x' + r + eps/2 <= 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import LvqModel
from .solver import ProgramSpec


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class LinearConstraint:
    """``q'x' + r + eps/2 <= 0`` for the prototype pair ``(i, j)``."""

    i: int
    j: int
    q: np.ndarray
    r: float

    @property
    def degenerate(self) -> bool:
        return not np.any(self.q) and self.r == 0.0

    def value(self, x, eps: float) -> float:
        """``d(x, p_i) + eps - d(x, p_j)``; the constraint holds when this is <= 0."""
        return float(2.0 * (self.q @ x + self.r) + eps)

    def row(self, eps: float) -> tuple[np.ndarray, float]:
        return self.q, -self.r - 0.5 * eps


@dataclass(frozen=True)
class QuadraticConstraint:
    """``1/2 x'Qx' + q'x' + r + eps/2 <= 0`` with ``Q = L_i - L_j``."""

    i: int
    j: int
    Q: np.ndarray
    q: np.ndarray
    r: float
    lam_i: np.ndarray
    lam_j: np.ndarray

    @property
    def degenerate(self) -> bool:
        return not np.any(self.Q) and not np.any(self.q) and self.r == 0.0

    @property
    def is_convex(self) -> bool:
        scale = max(1.0, float(np.abs(self.Q).max(initial=0.0)))
        return float(np.linalg.eigvalsh(self.Q).min()) >= -1e-10 * scale

    def value(self, x, eps: float) -> float:
        """``d(x, p_i) + eps - d(x, p_j)``."""
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + 2.0 * (self.q @ x + self.r) + eps)

    def convex_part(self, x, eps: float) -> float:
        """``f(x) = 1/2 x'L_i x + q'x + r + eps/2``."""
        return float(0.5 * x @ self.lam_i @ x + self.q @ x + self.r + 0.5 * eps)

    def concave_part(self, x) -> float:
        """``g(x) = 1/2 x'L_j x``; the row is ``f - g <= 0``."""
        return float(0.5 * x @ self.lam_j @ x)


def _check_target(model: LvqModel, target: int):
    if not 0 <= target < model.n_prototypes:
        raise ConstraintError(f"target prototype {target} out of range")


def linear_constraints(model: LvqModel, target: int, epsilon: float = 1e-4) -> list[LinearConstraint]:
    """Half-space rows making prototype ``target`` beat every wrong-label prototype."""
    if model.metric == "local":
        raise ConstraintError("linear constraints need an identity or global metric; use quadratic_constraints")
    if epsilon <= 0:
        raise ConstraintError("epsilon must be positive")
    _check_target(model, target)
    lam = model.lambdas[target]
    p_i = model.prototypes[target].w
    out = []
    for j in model.indices_without_label(model.prototypes[target].label):
        p_j = model.prototypes[j].w
        q = lam @ (p_j - p_i)
        r = 0.5 * (p_i @ lam @ p_i - p_j @ lam @ p_j)
        out.append(LinearConstraint(i=target, j=j, q=q, r=float(r)))
    return out


def quadratic_constraints(model: LvqModel, target: int, epsilon: float = 1e-4) -> list[QuadraticConstraint]:
    if epsilon <= 0:
        raise ConstraintError("epsilon must be positive")
    _check_target(model, target)
    lam_i = model.lambdas[target]
    p_i = model.prototypes[target].w
    out = []
    for j in model.indices_without_label(model.prototypes[target].label):
        lam_j = model.lambdas[j]
        p_j = model.prototypes[j].w
        Q = lam_i - lam_j
        Q = 0.5 * (Q + Q.T)
        q = lam_j @ p_j - lam_i @ p_i
        r = 0.5 * (p_i @ lam_i @ p_i - p_j @ lam_j @ p_j)
        out.append(QuadraticConstraint(i=target, j=j, Q=Q, q=q, r=float(r), lam_i=lam_i, lam_j=lam_j))
    return out


def linearize_concave_part(lam_j, x_k) -> tuple[np.ndarray, float]:
    """First-order expansion of ``g(x) = 1/2 x'L_j x`` at ``x_k``.

    Returns ``(rho, r_tilde)`` with ``g_hat(x) = rho'x + r_tilde``; since ``g`` is
    convex, ``g_hat <= g`` everywhere with equality at ``x_k``.
    """
    x_k = np.asarray(x_k, dtype=float)
    rho = lam_j @ x_k
    return rho, float(-0.5 * x_k @ lam_j @ x_k)


# -- user constraints -------------------------------------------------------


@dataclass(frozen=True)
class UserConstraints:
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    frozen: tuple[int, ...] = ()
    linear: tuple[tuple[np.ndarray, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.lower is not None:
            object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        if self.upper is not None:
            object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower is not None and self.upper is not None:
            if self.lower.shape != self.upper.shape:
                raise ConstraintError("box: lower and upper have different lengths")
            bad = np.flatnonzero(self.lower > self.upper)
            if bad.size:
                raise ConstraintError(f"box: lower > upper for features {bad.tolist()}")
        object.__setattr__(self, "frozen", tuple(sorted({int(j) for j in self.frozen})))
        rows = []
        for a, b in self.linear:
            rows.append((np.asarray(a, dtype=float), float(b)))
        object.__setattr__(self, "linear", tuple(rows))

    @property
    def empty(self) -> bool:
        return self.lower is None and self.upper is None and not self.frozen and not self.linear

    def check_dim(self, d: int):
        for name, v in (("box.lower", self.lower), ("box.upper", self.upper)):
            if v is not None and v.shape != (d,):
                raise ConstraintError(f"{name}: expected length {d}, got {v.size}")
        for j in self.frozen:
            if not 0 <= j < d:
                raise ConstraintError(f"frozen: feature index {j} out of range for dimension {d}")
        for k, (a, _) in enumerate(self.linear):
            if a.shape != (d,):
                raise ConstraintError(f"linear[{k}].a: expected length {d}, got {a.size}")

    def satisfied(self, x, tol: float = 1e-8, x_orig=None) -> bool:
        x = np.asarray(x, dtype=float)
        if self.lower is not None and np.any(x < self.lower - tol):
            return False
        if self.upper is not None and np.any(x > self.upper + tol):
            return False
        if x_orig is not None and any(x[j] != x_orig[j] for j in self.frozen):
            return False
        return all(a @ x <= b + tol for a, b in self.linear)

    @classmethod
    def from_dict(cls, doc) -> "UserConstraints":
        if not isinstance(doc, dict):
            raise ConstraintError("constraints: top-level JSON value must be an object")
        box = doc.get("box") or {}
        try:
            linear = [(row["a"], row["b"]) for row in doc.get("linear", [])]
        except (KeyError, TypeError) as exc:
            raise ConstraintError("linear: every row needs 'a' and 'b'") from exc
        return cls(lower=box.get("lower"), upper=box.get("upper"), frozen=tuple(doc.get("frozen", ())),
                   linear=tuple(linear))

    def to_dict(self) -> dict:
        doc: dict = {}
        if self.lower is not None or self.upper is not None:
            doc["box"] = {}
            if self.lower is not None:
                doc["box"]["lower"] = self.lower.tolist()
            if self.upper is not None:
                doc["box"]["upper"] = self.upper.tolist()
        if self.frozen:
            doc["frozen"] = list(self.frozen)
        if self.linear:
            doc["linear"] = [{"a": a.tolist(), "b": b} for a, b in self.linear]
        return doc


def load_constraints(path) -> UserConstraints:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConstraintError(f"constraints file {path}: invalid JSON ({exc})") from exc
    return UserConstraints.from_dict(doc)


def apply_user_constraints(spec: ProgramSpec, uc: UserConstraints, x) -> ProgramSpec:
    """Add frozen features, boxes and linear rows on the first ``spec.nx`` variables."""
    if uc is None or uc.empty:
        return spec
    x = np.asarray(x, dtype=float)
    d = spec.nx
    uc.check_dim(d)
    n = spec.n
    if uc.frozen:
        A = np.zeros((len(uc.frozen), n))
        A[np.arange(len(uc.frozen)), list(uc.frozen)] = 1.0
        spec = spec.add_eq(A, x[list(uc.frozen)])
    if uc.lower is not None or uc.upper is not None:
        pad = np.full(n - d, np.inf)
        lb = None if uc.lower is None else np.concatenate([uc.lower, -pad])
        ub = None if uc.upper is None else np.concatenate([uc.upper, pad])
        spec = spec.with_bounds(lb, ub)
    if uc.linear:
        G = np.zeros((len(uc.linear), n))
        for k, (a, _) in enumerate(uc.linear):
            G[k, :d] = a
        spec = spec.add_ineq(G, np.array([b for _, b in uc.linear]))
    return spec
