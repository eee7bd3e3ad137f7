"""Distance-from-original regularizers and their program objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import ProgramSpec

KINDS = ("manhattan", "euclidean", "gl2")


@dataclass(frozen=True)
class Regularizer:
    """``kind`` is ``manhattan`` (weights ``alpha``), ``euclidean`` or ``gl2`` (matrix ``lam``)."""

    kind: str
    alpha: np.ndarray | None = None
    lam: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}; expected one of {KINDS}")
        if self.kind == "manhattan":
            if self.alpha is None:
                raise ValueError("manhattan regularizer needs feature weights")
            alpha = np.asarray(self.alpha, dtype=float)
            if alpha.ndim != 1 or np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
                raise ValueError("manhattan weights must be a vector of finite positive values")
            object.__setattr__(self, "alpha", alpha)
        if self.kind == "gl2":
            if self.lam is None:
                raise ValueError("gl2 regularizer needs a matrix")
            lam = np.asarray(self.lam, dtype=float)
            if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
                raise ValueError("gl2 matrix must be square")
            if np.abs(lam - lam.T).max() > 1e-8:
                raise ValueError("gl2 matrix must be symmetric")
            if np.linalg.eigvalsh(lam).min() < -1e-8 * max(1.0, np.abs(lam).max()):
                raise ValueError("gl2 matrix must be positive semi-definite")
            object.__setattr__(self, "lam", lam)

    @classmethod
    def manhattan(cls, alpha) -> "Regularizer":
        return cls("manhattan", alpha=alpha)

    @classmethod
    def euclidean(cls) -> "Regularizer":
        return cls("euclidean")

    @classmethod
    def gl2(cls, lam) -> "Regularizer":
        return cls("gl2", lam=lam)

    @property
    def sum_weights(self) -> float:
        return float(self.alpha.sum()) if self.kind == "manhattan" else float("nan")


def evaluate(reg: Regularizer, xcf, x) -> float:
    xcf = np.asarray(xcf, dtype=float)
    x = np.asarray(x, dtype=float)
    if xcf.shape != x.shape:
        raise ValueError(f"dimension mismatch: {xcf.shape} vs {x.shape}")
    diff = x - xcf
    if reg.kind == "manhattan":
        if reg.alpha.shape != x.shape:
            raise ValueError(f"weights have length {reg.alpha.size}, input has {x.size}")
        return float(np.sum(reg.alpha * np.abs(diff)))
    if reg.kind == "euclidean":
        return float(diff @ diff)
    if reg.lam.shape[0] != x.size:
        raise ValueError(f"matrix has size {reg.lam.shape[0]}, input has {x.size}")
    return float(max(diff @ reg.lam @ diff, 0.0))


def mad_weights(X) -> np.ndarray:
    """Inverse median absolute deviation per feature.

    Features with zero MAD (constant, or mostly constant) get weight 1 so they
    stay changeable; freeze them explicitly if they must not move.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) data matrix")
    mad = np.median(np.abs(X - np.median(X, axis=0)), axis=0)
    alpha = np.ones(X.shape[1])
    nz = mad > 0
    alpha[nz] = 1.0 / mad[nz]
    return alpha


def zero_mad_features(X) -> list[int]:
    X = np.asarray(X, dtype=float)
    mad = np.median(np.abs(X - np.median(X, axis=0)), axis=0)
    return [int(j) for j in np.flatnonzero(mad == 0)]


def build_objective(reg: Regularizer, x) -> ProgramSpec:
    """Program objective whose minimizers are the minimizers of ``reg(., x)``.

    Manhattan uses the epigraph form over ``(x', beta)``; the quadratic kinds
    drop the constant term, so objective values differ from ``evaluate``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    if reg.kind == "manhattan":
        if reg.alpha.size != d:
            raise ValueError(f"weights have length {reg.alpha.size}, input has {d}")
        U = np.diag(reg.alpha)
        eye = np.eye(d)
        G = np.block([[U, -eye], [-U, -eye]])
        h = np.concatenate([U @ x, -U @ x])
        lb = np.concatenate([np.full(d, -np.inf), np.zeros(d)])
        return ProgramSpec(n=2 * d, nx=d, c=np.concatenate([np.zeros(d), np.ones(d)]), G=G, h=h, lb=lb)
    lam = np.eye(d) if reg.kind == "euclidean" else reg.lam
    if lam.shape[0] != d:
        raise ValueError(f"matrix has size {lam.shape[0]}, input has {d}")
    return ProgramSpec(n=d, nx=d, P=lam.copy(), c=-(lam @ x))
