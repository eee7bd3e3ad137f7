"""Dense primal-dual interior-point solver for small convex programs.

Problems have the form::

    minimize    1/2 z'Pz + c'z
    subject to  A z  = b
                G z <= h
                1/2 z'P_k z + q_k'z + r_k <= 0      (P_k psd)
                lb <= z <= ub

Programs with only linear rows go through a slack-based primal-dual method with
Mehrotra's predictor-corrector; no strictly feasible start is needed.  Quadratic
rows are rewritten as second-order cones through a factor ``P_k = LL'`` and the
cone program is solved with Nesterov-Todd scaling.  When the main iteration does
not converge, a phase-1 program (``min t  s.t.  F_k(z) <= t``) decides between
"infeasible" and a solver failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class QuadRow:
    """Convex quadratic row ``1/2 z'Pz + q'z + r <= 0``."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def value(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z + self.r)

    def grad(self, z: np.ndarray) -> np.ndarray:
        return self.P @ z + self.q


@dataclass(frozen=True)
class ProgramSpec:
    """A linear or convex quadratic program with optional convex quadratic rows.

    The first ``nx`` variables are the user-facing point; any further variables
    (epigraph bounds, slacks) are auxiliary.
    """

    n: int
    c: np.ndarray
    P: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    quad: tuple[QuadRow, ...] = ()
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    nx: int | None = None

    def __post_init__(self):
        n = self.n
        if self.nx is None:
            object.__setattr__(self, "nx", n)
        if self.c.shape != (n,):
            raise ValueError(f"objective vector has shape {self.c.shape}, expected ({n},)")
        if self.P is not None and self.P.shape != (n, n):
            raise ValueError("objective matrix has the wrong shape")
        for M, v, name in ((self.A, self.b, "equality"), (self.G, self.h, "inequality")):
            if (M is None) != (v is None):
                raise ValueError(f"{name} rows need both matrix and right-hand side")
            if M is not None and (M.ndim != 2 or M.shape[1] != n or v.shape != (M.shape[0],)):
                raise ValueError(f"{name} rows have inconsistent shapes")
        for row in self.quad:
            if row.P.shape != (n, n) or row.q.shape != (n,):
                raise ValueError("quadratic row has the wrong shape")

    @property
    def is_linear(self) -> bool:
        return self.P is None and not self.quad

    @property
    def n_eq(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return 0 if self.G is None else self.G.shape[0]

    def objective(self, z: np.ndarray) -> float:
        val = float(self.c @ z)
        if self.P is not None:
            val += 0.5 * float(z @ self.P @ z)
        return val

    def add_eq(self, A, b) -> "ProgramSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.A is not None:
            A, b = np.vstack([self.A, A]), np.concatenate([self.b, b])
        return replace(self, A=A, b=b)

    def add_ineq(self, G, h) -> "ProgramSpec":
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if self.G is not None:
            G, h = np.vstack([self.G, G]), np.concatenate([self.h, h])
        return replace(self, G=G, h=h)

    def add_quad(self, rows) -> "ProgramSpec":
        return replace(self, quad=self.quad + tuple(rows))

    def with_bounds(self, lb=None, ub=None) -> "ProgramSpec":
        n = self.n
        new_lb = np.full(n, -np.inf) if self.lb is None else self.lb.copy()
        new_ub = np.full(n, np.inf) if self.ub is None else self.ub.copy()
        if lb is not None:
            new_lb = np.maximum(new_lb, lb)
        if ub is not None:
            new_ub = np.minimum(new_ub, ub)
        return replace(self, lb=new_lb, ub=new_ub)


@dataclass(frozen=True)
class SolverTolerances:
    feas: float = 1e-8
    kkt: float = 1e-6
    max_iter: int = 200


@dataclass
class Duals:
    eq: np.ndarray
    ineq: np.ndarray
    quad: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class SolveOutcome:
    status: str
    z: np.ndarray | None = None
    objective_value: float = math.nan
    iterations: int = 0
    max_violation: float = math.nan
    duals: Duals | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class KktReport:
    stationarity: float
    complementarity: float
    primal_feasibility: float
    dual_feasibility: float

    def worst(self) -> float:
        return max(self.stationarity, self.complementarity, self.primal_feasibility, self.dual_feasibility)


# -- internal standard form -------------------------------------------------


@dataclass
class _Std:
    """All inequalities stacked as ``G z <= h`` followed by the quad rows."""

    P: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    quad: tuple[QuadRow, ...]
    lower_idx: np.ndarray
    upper_idx: np.ndarray
    n_lin: int = field(init=False)

    def __post_init__(self):
        self.n_lin = self.G.shape[0]

    @property
    def m(self) -> int:
        return self.n_lin + len(self.quad)

    def F(self, z):
        out = np.empty(self.m)
        out[: self.n_lin] = self.G @ z - self.h
        for k, row in enumerate(self.quad):
            out[self.n_lin + k] = row.value(z)
        return out

    def J(self, z):
        if not self.quad:
            return self.G
        return np.vstack([self.G] + [row.grad(z)[None] for row in self.quad])


def _standardize(spec: ProgramSpec) -> _Std:
    n = spec.n
    G_rows = [spec.G] if spec.G is not None else []
    h_rows = [spec.h] if spec.h is not None else []
    lower_idx = np.array([], dtype=int)
    upper_idx = np.array([], dtype=int)
    A, b = (spec.A, spec.b) if spec.A is not None else (np.zeros((0, n)), np.zeros(0))
    if spec.lb is not None or spec.ub is not None:
        lb = spec.lb if spec.lb is not None else np.full(n, -np.inf)
        ub = spec.ub if spec.ub is not None else np.full(n, np.inf)
        eye = np.eye(n)
        fixed = np.flatnonzero(lb == ub)
        if fixed.size:
            # a zero-width box is an equality; as two inequalities it has no interior
            A = np.vstack([A, eye[fixed]])
            b = np.concatenate([b, lb[fixed]])
        lower_idx = np.flatnonzero(np.isfinite(lb) & (lb != ub))
        upper_idx = np.flatnonzero(np.isfinite(ub) & (lb != ub))
        G_rows += [-eye[lower_idx], eye[upper_idx]]
        h_rows += [-lb[lower_idx], ub[upper_idx]]
    G = np.vstack(G_rows) if G_rows else np.zeros((0, n))
    h = np.concatenate(h_rows) if h_rows else np.zeros(0)
    P = spec.P if spec.P is not None else np.zeros((n, n))
    return _Std(P=P, c=spec.c, A=A, b=b, G=G, h=h, quad=spec.quad,
                lower_idx=lower_idx, upper_idx=upper_idx)


def _split_duals(spec: ProgramSpec, std: _Std, lam: np.ndarray, nu: np.ndarray) -> Duals:
    n = spec.n
    n_user = spec.n_ineq
    n_lo, n_up = std.lower_idx.size, std.upper_idx.size
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[std.lower_idx] = lam[n_user: n_user + n_lo]
    upper[std.upper_idx] = lam[n_user + n_lo: n_user + n_lo + n_up]
    eq = nu[: spec.n_eq]
    # multipliers of zero-width boxes came out as equality duals: fold them into the bounds
    if spec.lb is not None and spec.ub is not None:
        fixed = np.flatnonzero(spec.lb == spec.ub)
        fixed_nu = nu[spec.n_eq:]
        lower[fixed] = np.maximum(-fixed_nu, 0.0)
        upper[fixed] = np.maximum(fixed_nu, 0.0)
    return Duals(eq=eq, ineq=lam[:n_user], quad=lam[std.n_lin:], lower=lower, upper=upper)


class _Kkt:
    """LU factors of ``[[M, A'], [A, 0]]`` (lightly regularized), reused for several right-hand sides."""

    def __init__(self, M, A):
        n, p = M.shape[0], A.shape[0]
        K = np.zeros((n + p, n + p))
        K[:n, :n] = M
        K[:n, n:] = A.T
        K[n:, :n] = A
        # tiny regularization keeps rank-deficient LP/equality blocks solvable
        reg = 1e-13 * (1.0 + np.abs(M).max(initial=0.0))
        diag = K.reshape(-1)[:: n + p + 1]
        diag[:n] += reg
        diag[n:] -= reg
        self.n = n
        self.K = K
        lu = scipy.linalg.lapack.dgetrf(K)
        # info > 0 flags an exactly zero pivot
        self.lu = (lu[0], lu[1]) if lu[2] == 0 and np.isfinite(lu[0].sum()) else None

    def solve(self, rhs_z, rhs_e):
        rhs = np.concatenate([rhs_z, rhs_e])
        if self.lu is not None:
            sol = scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)
        else:
            sol = np.linalg.lstsq(self.K, rhs, rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("non-finite Newton step")
        return sol[: self.n], sol[self.n:]


def _kkt_solve(M, A, rhs_z, rhs_e):
    return _Kkt(M, A).solve(rhs_z, rhs_e)


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float((-v[neg] / dv[neg]).min()))


def _ipm(std: _Std, tol: SolverTolerances, z0: np.ndarray | None = None):
    """Linear rows only. Returns (converged, z, lam, nu, iterations, message)."""
    n = std.c.shape[0]
    m = std.m
    p = std.A.shape[0]
    G, h, A, b, P, c = std.G, std.h, std.A, std.b, std.P, std.c
    z = np.zeros(n) if z0 is None else np.array(z0, dtype=float)
    nu = np.zeros(p)
    s = np.maximum(h - G @ z, 1.0)
    lam = np.ones(m)
    scale_d = 1.0 + np.abs(c).max(initial=0.0) + np.abs(P).max(initial=0.0)
    scale_p = 1.0 + max(np.abs(h).max(initial=0.0), np.abs(b).max(initial=0.0))
    # tight internal targets; the public tolerances are checked again by the caller
    tgt_d = 1e-3 * tol.kkt * scale_d
    tgt_p = 1e-2 * tol.feas
    tgt_mu = 1e-4 * tol.kkt

    best = None
    it = 0
    for it in range(1, tol.max_iter + 1):
        F = G @ z - h
        r_d = P @ z + c + G.T @ lam + (A.T @ nu if p else 0.0)
        r_p = F + s
        r_e = A @ z - b
        mu = float(s @ lam) / m if m else 0.0
        viol = max(np.max(F, initial=0.0), np.abs(r_e).max(initial=0.0))
        rd_norm = np.abs(r_d).max(initial=0.0)
        if rd_norm <= tol.kkt * scale_d * 1e-1 and viol <= tol.feas * 1e-1 and mu <= tol.kkt * 1e-2:
            best = (z.copy(), lam.copy(), nu.copy())
        if rd_norm <= tgt_d and viol <= tgt_p and np.abs(r_p).max(initial=0.0) <= scale_p * 1e-9 and mu <= tgt_mu:
            return True, z, lam, nu, it, "converged"
        if not (np.all(np.isfinite(z)) and np.abs(lam).max(initial=0.0) < 1e13 and np.abs(z).max(initial=0.0) < 1e13):
            break
        if m and not (s.min() > 0 and lam.min() > 0):
            break

        D = lam / s
        kkt = _Kkt(P + (G.T * D) @ G, A)

        def direction(r_c):
            rhs = -r_d - G.T @ (D * r_p - r_c / s)
            dz, dnu = kkt.solve(rhs, -r_e)
            dlam = D * (G @ dz + r_p) - r_c / s
            ds = -(r_c + s * dlam) / lam
            return dz, dnu, dlam, ds

        try:
            if m:
                dz, dnu, dlam, ds = direction(s * lam)
                a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
                mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / m
                sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
                dz, dnu, dlam, ds = direction(s * lam + ds * dlam - sigma * mu)
            else:
                dz, dnu, dlam, ds = direction(np.zeros(0))
        except np.linalg.LinAlgError:
            break

        alpha = 1.0
        if m:
            eta = max(0.9, 1.0 - 10 * mu)
            alpha = min(1.0, eta * _max_step(s, ds), eta * _max_step(lam, dlam))
            lam = lam + alpha * dlam
            s = s + alpha * ds
        z = z + alpha * dz
        nu = nu + alpha * dnu
    if best is not None:
        return True, best[0], best[1], best[2], it, "converged to public tolerances"
    return False, z, lam, nu, it, "did not converge"


# ---- second-order-cone route for programs with quadratic rows ----
#
# A row 1/2 z'LL'z + q'z + r <= 0 is  ||L'z||^2 <= w  with  w = -2(q'z + r),  i.e.
# (w + 1, w - 1, 2L'z) lies in the second-order cone.  The cone program is solved
# with Nesterov-Todd scaling and Mehrotra correction.


def _psd_factor(P: np.ndarray) -> np.ndarray:
    """``L`` with ``LL' = P``; eigenvalues at or below noise level are dropped."""
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    keep = w > 1e-10 * max(1.0, w.max(initial=0.0))
    return V[:, keep] * np.sqrt(w[keep])


@dataclass
class _Cone:
    """Nonnegative orthant of size ``l`` followed by second-order cone blocks."""

    l: int
    blocks: list[slice]
    groups: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        # blocks of equal size are handled together as rows of an index matrix
        by_size: dict[int, list[np.ndarray]] = {}
        for blk in self.blocks:
            by_size.setdefault(blk.stop - blk.start, []).append(np.arange(blk.start, blk.stop))
        self.groups = [np.array(v) for v in by_size.values()]

    @property
    def degree(self) -> int:
        return self.l + len(self.blocks)

    def e(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[: self.l] = 1.0
        for idx in self.groups:
            out[idx[:, 0]] = 1.0
        return out

    def prod(self, u, v):
        w = u * v
        for idx in self.groups:
            a, c = u[idx], v[idx]
            w[idx[:, 0]] = np.einsum("ij,ij->i", a, c)
            w[idx[:, 1:]] = a[:, :1] * c[:, 1:] + c[:, :1] * a[:, 1:]
        return w

    def div(self, lam, y):
        """``x`` with ``lam o x = y``."""
        x = y.copy()
        x[: self.l] /= lam[: self.l]
        for idx in self.groups:
            a, c = lam[idx], y[idx]
            det = a[:, 0] ** 2 - np.einsum("ij,ij->i", a[:, 1:], a[:, 1:])
            x0 = (a[:, 0] * c[:, 0] - np.einsum("ij,ij->i", a[:, 1:], c[:, 1:])) / det
            x[idx[:, 0]] = x0
            x[idx[:, 1:]] = (c[:, 1:] - x0[:, None] * a[:, 1:]) / a[:, :1]
        return x

    def max_step(self, v, dv) -> float:
        """Largest ``a`` with ``v + a dv`` in the cone (``v`` interior)."""
        neg = dv[: self.l] < 0
        step = float(np.min(-v[: self.l][neg] / dv[: self.l][neg])) if neg.any() else np.inf
        for blk in self.blocks:
            step = min(step, _soc_step(v[blk], dv[blk]))
        return step

    def depth(self, v) -> float:
        """Smallest ``t`` with ``v + t e`` in the cone."""
        t = float(np.max(-v[: self.l], initial=-np.inf))
        for idx in self.groups:
            b = v[idx]
            t = max(t, float(np.max(np.linalg.norm(b[:, 1:], axis=1) - b[:, 0])))
        return t

    def scaling(self, s, z):
        """Nesterov-Todd scaling ``W`` (symmetric) with ``W z = W^-1 s``.

        Returns the orthant diagonal and the dense cone part of ``W`` and its inverse.
        """
        kq = s.size - self.l
        W = np.zeros((kq, kq))
        Winv = np.zeros((kq, kq))
        for blk in self.blocks:
            sb, zb = s[blk], z[blk]
            sn = math.sqrt(max(sb[0] ** 2 - float(sb[1:] @ sb[1:]), 1e-300))
            zn = math.sqrt(max(zb[0] ** 2 - float(zb[1:] @ zb[1:]), 1e-300))
            sb, zb = sb / sn, zb / zn
            gamma = math.sqrt(max(0.5 * (1.0 + float(sb @ zb)), 1e-300))
            wb = sb.copy()
            wb[0] += zb[0]
            wb[1:] -= zb[1:]
            wb /= 2.0 * gamma
            # wb is the scaling point (P(wb) zb = sb); W uses its square root
            wb[0] += 1.0
            wb /= math.sqrt(2.0 * wb[0])
            Jw = wb.copy()
            Jw[1:] *= -1.0
            J = -np.eye(wb.size)
            J[0, 0] = 1.0
            beta = math.sqrt(sn / zn)
            i = slice(blk.start - self.l, blk.stop - self.l)
            W[i, i] = beta * (2.0 * np.outer(wb, wb) - J)
            Winv[i, i] = (2.0 * np.outer(Jw, Jw) - J) / beta
        return np.sqrt(s[: self.l] / z[: self.l]), W, Winv


def _soc_step(s, d) -> float:
    """First positive root of ``(s0 + a d0)^2 - |s1 + a d1|^2`` (``s`` interior)."""
    s1, d1 = s[1:], d[1:]
    a = d[0] * d[0] - float(d1 @ d1)
    b = s[0] * d[0] - float(s1 @ d1)
    c = s[0] * s[0] - float(s1 @ s1)
    if d[0] >= 0 and a >= 0:
        return np.inf
    disc = b * b - a * c
    if disc < 0:
        return np.inf
    q = -(b + math.copysign(math.sqrt(disc), b))
    roots = []
    if a != 0:
        roots.append(q / a)
    elif b < 0:
        roots.append(-c / (2 * b))
    if q != 0:
        roots.append(c / q)
    return min((r for r in roots if r > 0), default=np.inf)


def _conic_form(std: _Std):
    n = std.c.shape[0]
    rows, rhs, blocks = [std.G], [std.h], []
    k = std.n_lin
    factors: dict[bytes, np.ndarray] = {}
    for row in std.quad:
        key = row.P.tobytes()
        if key not in factors:
            factors[key] = _psd_factor(row.P)
        L = factors[key]
        top = np.vstack([2.0 * row.q, 2.0 * row.q])
        rows.append(np.vstack([top, -2.0 * L.T]) if L.size else top)
        rhs.append(np.r_[1.0 - 2.0 * row.r, -1.0 - 2.0 * row.r, np.zeros(L.shape[1])])
        blocks.append(slice(k, k + 2 + L.shape[1]))
        k += 2 + L.shape[1]
    G = np.vstack(rows) if rows else np.zeros((0, n))
    return G, np.concatenate(rhs), _Cone(std.n_lin, blocks)


def _conic_ipm(std: _Std, tol: SolverTolerances, z0: np.ndarray | None = None):
    """Cone route for programs with quadratic rows; same return shape as :func:`_ipm`."""
    P, c, A, b = std.P, std.c, std.A, std.b
    G, h, cone = _conic_form(std)
    m, p = h.size, A.shape[0]
    n, l = c.size, cone.l
    kq = m - l
    Gl, Gq = G[:l], G[l:]
    e = cone.e(m)
    if z0 is not None:
        # caller's primal point with least-squares duals, both shifted into the cone
        # and balanced so that s and z start with comparable complementarity
        x, y = np.array(z0, dtype=float), np.zeros(p)
        s = h - G @ x
        zd = np.linalg.lstsq(G.T, -(P @ x + c), rcond=None)[0]
        s += (max(1.5 * cone.depth(s), 0.0) + 1e-8) * e
        zd += (max(1.5 * cone.depth(zd), 0.0) + 1e-8) * e
        gap = float(s @ zd)
        s += 0.5 * gap / float(zd @ e) * e
        zd += 0.5 * gap / float(s @ e) * e
    else:
        # least-squares fit of Gz + s = h, pushed into the cone
        try:
            x, y = _kkt_solve(P + G.T @ G, A, -c + G.T @ h, b)
        except np.linalg.LinAlgError:
            return False, np.zeros(n), np.zeros(std.m), np.zeros(p), 0, "singular start system"
        s = h - G @ x
        zd = -s.copy()
        for v in (s, zd):
            t = cone.depth(v)
            if t >= 0:
                v += (1.0 + t) * e
    scale_d = 1.0 + np.abs(c).max(initial=0.0) + np.abs(P).max(initial=0.0)
    scale_p = 1.0 + np.abs(h).max(initial=0.0) + np.abs(b).max(initial=0.0)
    # the dual residual floors near 1e-9 once W is badly conditioned, so its target is looser
    tgt_d = 1e-2 * tol.kkt * scale_d
    tgt_p = 1e-2 * tol.feas * scale_p
    tgt_mu = 1e-4 * tol.kkt

    def unpack(zd):
        lam = np.empty(std.m)
        lam[: std.n_lin] = zd[: std.n_lin]
        for k, blk in enumerate(cone.blocks):
            # cone multiplier -> multiplier of the original quadratic row
            lam[std.n_lin + k] = 2.0 * (zd[blk.start] + zd[blk.start + 1])
        return lam

    # orthant rows are eliminated (diagonal scaling); cone rows stay in augmented form in
    # (dx, dy, W dz), since forming P + G'W^-2 G squares their conditioning near the boundary
    K = np.zeros((n + p + kq, n + p + kq))
    K[:n, n:n + p] = A.T
    K[n:n + p, :n] = A
    K[n + p:, n + p:] = -np.eye(kq)
    rhs = np.empty(n + p + kq)
    best = None
    it = 0
    for it in range(1, tol.max_iter + 1):
        r_x = P @ x + c + G.T @ zd
        if p:
            r_x += A.T @ y
        r_y = A @ x - b
        r_z = G @ x + s - h
        mu = float(s @ zd) / cone.degree
        rx_n = np.abs(r_x).max()
        rp_n = max(np.abs(r_z).max(), np.abs(r_y).max(initial=0.0))
        if rx_n <= tol.kkt * scale_d * 1e-1 and rp_n <= tol.feas * 1e-1 and mu <= tol.kkt * 1e-2:
            best = (x.copy(), unpack(zd), y.copy())
        if rx_n <= tgt_d and rp_n <= tgt_p and mu <= tgt_mu:
            return True, x, unpack(zd), y, it, "converged"
        if not (np.isfinite(rx_n) and np.abs(zd).max() < 1e13 and np.abs(x).max(initial=0.0) < 1e13):
            break
        if mu < 1e-6 * tgt_mu:
            # complementarity is exhausted; further steps only amplify rounding in W
            break
        with np.errstate(all="ignore"):
            wl, Wq, Wqi = cone.scaling(s, zd)
            lam = np.concatenate([wl * zd[:l], Wq @ zd[l:]])
            WGq = Wqi @ Gq
            K[:n, :n] = P + (Gl.T / wl ** 2) @ Gl
            K[:n, n + p:] = WGq.T
            K[n + p:, :n] = WGq
            lu_, piv, info = scipy.linalg.lapack.dgetrf(K)
            if info != 0 or not np.isfinite(lu_.sum()):
                break
            lu = (lu_, piv)
            Wrz = np.concatenate([r_z[:l] / wl, Wqi @ r_z[l:]])

            def direction(r_c):
                t = cone.div(lam, r_c) + Wrz
                tl = t[:l] / wl
                rhs[:n] = -r_x - Gl.T @ tl
                rhs[n:n + p] = -r_y
                rhs[n + p:] = -t[l:]
                sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                dx = sol[:n]
                dz = np.concatenate([(Gl @ dx) / wl ** 2 + tl, Wqi @ sol[n + p:]])
                # from the linear row rather than W(u - W dz): no cancellation near the boundary
                ds = -r_z - G @ dx
                return dx, sol[n:n + p], dz, ds

            ll = cone.prod(lam, lam)
            dx, dy, dz, ds = direction(-ll)
            a_aff = min(1.0, cone.max_step(s, ds), cone.max_step(zd, dz))
            rho = float((s + a_aff * ds) @ (zd + a_aff * dz)) / float(s @ zd)
            sigma = min(1.0, max(0.0, rho)) ** 3
            corr = cone.prod(np.concatenate([ds[:l] / wl, Wqi @ ds[l:]]),
                             np.concatenate([wl * dz[:l], Wq @ dz[l:]]))
            dx, dy, dz, ds = direction(-ll - corr + sigma * mu * e)
            alpha = min(1.0, 0.99 * cone.max_step(s, ds), 0.99 * cone.max_step(zd, dz))
        if not (np.isfinite(alpha) and alpha > 0 and np.isfinite(dx).all()):
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        zd = zd + alpha * dz
    if best is not None:
        return True, best[0], best[1], best[2], it, "converged to public tolerances"
    return False, x, unpack(zd), y, it, "did not converge"


def _core(std: _Std, tol: SolverTolerances, z0=None):
    # divergent iterates on infeasible programs overflow; both loops check finiteness themselves
    with np.errstate(all="ignore"):
        if std.quad:
            return _conic_ipm(std, tol, z0)
        return _ipm(std, tol, z0)


def _phase1_infeasible(std: _Std, tol: SolverTolerances) -> bool | None:
    """True if the rows cannot be satisfied, False if they can, None if undecided."""
    n = std.c.shape[0]
    if std.A.shape[0]:
        z_ls, *_ = np.linalg.lstsq(std.A, std.b, rcond=None)
        if np.abs(std.A @ z_ls - std.b).max() > tol.feas * (1 + np.abs(std.b).max()):
            return True
    if std.m == 0:
        return False
    # variables (z, t): min t  s.t.  F(z) - t <= 0,  -t <= 1
    G = np.hstack([std.G, -np.ones((std.n_lin, 1))])
    G = np.vstack([G, np.r_[np.zeros(n), -1.0][None]])
    h = np.r_[std.h, 1.0]
    quad = tuple(QuadRow(P=np.pad(r.P, ((0, 1), (0, 1))), q=np.r_[r.q, -1.0], r=r.r) for r in std.quad)
    P = np.zeros((n + 1, n + 1))
    # small proximal term keeps the phase-1 optimum bounded in z
    P[:n, :n] = 1e-9 * np.eye(n)
    std1 = _Std(P=P, c=np.r_[np.zeros(n), 1.0], A=np.hstack([std.A, np.zeros((std.A.shape[0], 1))]),
                b=std.b, G=G, h=h, quad=quad, lower_idx=np.array([], dtype=int),
                upper_idx=np.array([], dtype=int))
    ok, z1, *_ = _core(std1, SolverTolerances(feas=tol.feas, kkt=tol.kkt, max_iter=tol.max_iter))
    if not ok:
        return None
    t = z1[-1]
    if t > tol.feas:
        return True
    return False


def solve(spec: ProgramSpec, tol: SolverTolerances | None = None, z0=None) -> SolveOutcome:
    """Solve ``spec``; ``optimal`` is only reported for points within ``tol.feas`` of feasibility."""
    tol = tol or SolverTolerances()
    if spec.lb is not None and spec.ub is not None and np.any(spec.lb > spec.ub):
        return SolveOutcome(status=INFEASIBLE, message="lower bound above upper bound")
    std = _standardize(spec)
    converged, z, lam, nu, iters, msg = _core(std, tol, z0)
    if converged:
        F = std.F(z)
        viol = max(np.max(F, initial=0.0), np.abs(std.A @ z - std.b).max(initial=0.0))
        if viol <= tol.feas:
            return SolveOutcome(status=OPTIMAL, z=z, objective_value=spec.objective(z), iterations=iters,
                                max_violation=float(viol), duals=_split_duals(spec, std, lam, nu), message=msg)
        msg = f"converged point violates rows by {viol:.3g}"
    verdict = _phase1_infeasible(std, tol)
    if verdict:
        return SolveOutcome(status=INFEASIBLE, iterations=iters, message="phase-1 optimum is positive")
    status = MAX_ITERATIONS if iters >= tol.max_iter and verdict is False else NUMERICAL_FAILURE
    return SolveOutcome(status=status, z=None, iterations=iters, message=msg)


def verify_kkt(spec: ProgramSpec, z, duals: Duals) -> KktReport:
    """Residuals of the KKT conditions at ``(z, duals)``, all in the infinity norm."""
    z = np.asarray(z, dtype=float)
    grad = spec.c.copy()
    if spec.P is not None:
        grad = grad + spec.P @ z
    parts_c, parts_f, parts_d = [], [], []
    if spec.A is not None:
        grad = grad + spec.A.T @ duals.eq
        parts_f.append(np.abs(spec.A @ z - spec.b))
    if spec.G is not None:
        f = spec.G @ z - spec.h
        grad = grad + spec.G.T @ duals.ineq
        parts_f.append(np.maximum(f, 0.0))
        parts_c.append(np.abs(duals.ineq * f))
        parts_d.append(np.maximum(-duals.ineq, 0.0))
    for k, row in enumerate(spec.quad):
        f = row.value(z)
        grad = grad + duals.quad[k] * row.grad(z)
        parts_f.append(np.array([max(f, 0.0)]))
        parts_c.append(np.array([abs(duals.quad[k] * f)]))
        parts_d.append(np.array([max(-duals.quad[k], 0.0)]))
    if spec.lb is not None:
        fin = np.isfinite(spec.lb)
        f = np.where(fin, spec.lb - z, 0.0)
        grad = grad - duals.lower
        parts_f.append(np.maximum(f, 0.0))
        parts_c.append(np.abs(duals.lower * f))
        parts_d.append(np.maximum(-duals.lower, 0.0))
    if spec.ub is not None:
        fin = np.isfinite(spec.ub)
        f = np.where(fin, z - spec.ub, 0.0)
        grad = grad + duals.upper
        parts_f.append(np.maximum(f, 0.0))
        parts_c.append(np.abs(duals.upper * f))
        parts_d.append(np.maximum(-duals.upper, 0.0))

    def worst(parts):
        return float(max((np.max(p, initial=0.0) for p in parts), default=0.0))

    return KktReport(stationarity=float(np.abs(grad).max(initial=0.0)), complementarity=worst(parts_c),
                     primal_feasibility=worst(parts_f), dual_feasibility=worst(parts_d))


def dump_program(spec: ProgramSpec) -> str:
    """Plain-text dump: objective first, then one constraint row per line."""

    def vec(v):
        return " ".join(repr(float(x)) for x in v)

    lines = [f"n {spec.n} nx {spec.nx}"]
    if spec.P is not None:
        lines.append("objective quadratic")
        lines += [f"P {vec(row)}" for row in spec.P]
    else:
        lines.append("objective linear")
    lines.append(f"c {vec(spec.c)}")
    for i in range(spec.n_eq):
        lines.append(f"eq {vec(spec.A[i])} = {float(spec.b[i])!r}")
    for i in range(spec.n_ineq):
        lines.append(f"le {vec(spec.G[i])} <= {float(spec.h[i])!r}")
    for row in spec.quad:
        lines.append(f"quad r {row.r!r} q {vec(row.q)} P {vec(row.P.ravel())}")
    if spec.lb is not None:
        lines.append(f"lb {vec(spec.lb)}")
    if spec.ub is not None:
        lines.append(f"ub {vec(spec.ub)}")
    return "\n".join(lines) + "\n"
