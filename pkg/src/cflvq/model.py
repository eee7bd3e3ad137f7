"""LVQ models: prototypes, metrics, winner-takes-all prediction and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

METRIC_KINDS = ("identity", "global", "local")


class ModelError(ValueError):
    """Raised for malformed models, model files and inputs of the wrong shape."""


@dataclass(frozen=True)
class Prototype:
    w: np.ndarray
    label: int
    omega: np.ndarray | None = None


def _as_matrix(name: str, value, dim: int) -> np.ndarray:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name}: not a numeric matrix") from exc
    if m.shape != (dim, dim):
        raise ModelError(f"{name}: expected shape ({dim}, {dim}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ModelError(f"{name}: contains non-finite entries")
    return m


def lambda_from_omega(omega: np.ndarray) -> np.ndarray:
    """Return the psd distance matrix omega^T omega, symmetrized."""
    lam = omega.T @ omega
    return 0.5 * (lam + lam.T)


@dataclass(frozen=True)
class LvqModel:
    """A labeled prototype set plus its metric.

    ``metric`` is one of ``"identity"``, ``"global"`` (one ``omega`` shared by all
    prototypes) or ``"local"`` (each prototype carries its own ``omega``).  The
    matrices ``lambda = omega^T omega`` are computed once at construction.
    """

    prototypes: tuple[Prototype, ...]
    metric: str = "identity"
    omega: np.ndarray | None = None
    lambdas: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        protos = tuple(self.prototypes)
        object.__setattr__(self, "prototypes", protos)
        if self.metric not in METRIC_KINDS:
            raise ModelError(f"metric: unknown kind {self.metric!r}")
        if len(protos) < 2:
            raise ModelError("prototypes: at least 2 prototypes are required")
        dim = np.asarray(protos[0].w).shape[0] if np.ndim(protos[0].w) == 1 else -1
        if dim < 1:
            raise ModelError("prototypes[0].w: must be a non-empty vector")

        fixed = []
        for i, p in enumerate(protos):
            w = np.asarray(p.w, dtype=float)
            if w.shape != (dim,):
                raise ModelError(f"prototypes[{i}].w: expected length {dim}, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ModelError(f"prototypes[{i}].w: contains non-finite entries")
            omega = None
            if self.metric == "local":
                if p.omega is None:
                    raise ModelError(f"prototypes[{i}].omega: required for local metric")
                omega = _as_matrix(f"prototypes[{i}].omega", p.omega, dim)
            elif p.omega is not None:
                raise ModelError(f"prototypes[{i}].omega: only allowed for local metric")
            w.flags.writeable = False
            if omega is not None:
                omega.flags.writeable = False
            fixed.append(Prototype(w=w, label=int(p.label), omega=omega))
        protos = tuple(fixed)
        object.__setattr__(self, "prototypes", protos)

        if len({p.label for p in protos}) < 2:
            raise ModelError("prototypes: at least 2 distinct labels are required")
        for i in range(len(protos)):
            for j in range(i + 1, len(protos)):
                if protos[i].label != protos[j].label and np.array_equal(protos[i].w, protos[j].w):
                    raise ModelError(
                        f"prototypes[{i}] and prototypes[{j}]: identical vectors with different labels")

        if self.metric == "global":
            if self.omega is None:
                raise ModelError("omega: required for global metric")
            omega = _as_matrix("omega", self.omega, dim)
            omega.flags.writeable = False
            object.__setattr__(self, "omega", omega)
            lam = lambda_from_omega(omega)
            lambdas = tuple(lam for _ in protos)
        else:
            if self.omega is not None:
                raise ModelError("omega: only allowed for global metric")
            if self.metric == "identity":
                eye = np.eye(dim)
                lambdas = tuple(eye for _ in protos)
            else:
                lambdas = tuple(lambda_from_omega(p.omega) for p in protos)
        for lam in lambdas:
            lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def dim(self) -> int:
        return self.prototypes[0].w.shape[0]

    @property
    def n_prototypes(self) -> int:
        return len(self.prototypes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.prototypes])

    @property
    def W(self) -> np.ndarray:
        return np.stack([p.w for p in self.prototypes])

    def check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ModelError(f"input: expected a vector of length {self.dim}, got shape {x.shape}")
        return x

    def distance(self, x, i: int) -> float:
        """Generalized squared distance (x - p_i)^T lambda_i (x - p_i)."""
        x = self.check_input(x)
        if not 0 <= i < self.n_prototypes:
            raise ModelError(f"prototype index {i} out of range")
        diff = x - self.prototypes[i].w
        return float(diff @ self.lambdas[i] @ diff)

    def distances(self, X) -> np.ndarray:
        """Distances of each row of ``X`` to every prototype, shape (n, n_prototypes)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise ModelError(f"input: expected {self.dim} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.n_prototypes))
        for i, (p, lam) in enumerate(zip(self.prototypes, self.lambdas)):
            diff = X - p.w
            out[:, i] = np.einsum("nd,de,ne->n", diff, lam, diff)
        return out[0] if single else out

    def winner(self, x) -> int:
        # np.argmin returns the first minimum: ties go to the lowest index
        return int(np.argmin(self.distances(self.check_input(x))))

    def predict(self, X):
        """Winner-takes-all labels; accepts one vector or a matrix of rows."""
        d = self.distances(X)
        return self.labels[np.argmin(d, axis=-1)] if d.ndim == 2 else int(self.labels[np.argmin(d)])

    def indices_with_label(self, label: int) -> list[int]:
        return [i for i, p in enumerate(self.prototypes) if p.label == label]

    def indices_without_label(self, label: int) -> list[int]:
        return [i for i, p in enumerate(self.prototypes) if p.label != label]

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict = {"dim": self.dim, "metric": self.metric}
        if self.metric == "global":
            doc["omega"] = self.omega.tolist()
        protos = []
        for p in self.prototypes:
            entry: dict = {"w": p.w.tolist(), "label": p.label}
            if p.omega is not None:
                entry["omega"] = p.omega.tolist()
            protos.append(entry)
        doc["prototypes"] = protos
        return doc

    @classmethod
    def from_dict(cls, doc) -> "LvqModel":
        if not isinstance(doc, dict):
            raise ModelError("model: top-level JSON value must be an object")
        metric = doc.get("metric", "identity")
        if metric not in METRIC_KINDS:
            raise ModelError(f"metric: must be one of {METRIC_KINDS}, got {metric!r}")
        raw = doc.get("prototypes")
        if not isinstance(raw, list):
            raise ModelError("prototypes: missing or not a list")
        protos = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict) or "w" not in entry or "label" not in entry:
                raise ModelError(f"prototypes[{i}]: needs 'w' and 'label'")
            label = entry["label"]
            if isinstance(label, bool) or not isinstance(label, int):
                raise ModelError(f"prototypes[{i}].label: must be an integer")
            try:
                w = np.asarray(entry["w"], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ModelError(f"prototypes[{i}].w: not a numeric vector") from exc
            if w.ndim != 1:
                raise ModelError(f"prototypes[{i}].w: must be a flat list")
            omega = entry.get("omega")
            protos.append(Prototype(w=w, label=label, omega=None if omega is None else np.asarray(omega, dtype=float)))
        model = cls(prototypes=tuple(protos), metric=metric,
                    omega=None if doc.get("omega") is None else doc["omega"])
        if "dim" in doc and doc["dim"] != model.dim:
            raise ModelError(f"dim: declared {doc['dim']} but prototype vectors have length {model.dim}")
        return model


def save_model(model: LvqModel, path) -> None:
    # json writes floats via repr(), the shortest round-tripping form (<= 17 digits)
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path) -> LvqModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file {path}: invalid JSON ({exc})") from exc
    return LvqModel.from_dict(doc)


def make_model(W, labels, metric: str = "identity", omega=None, omegas: Sequence | None = None) -> LvqModel:
    """Convenience constructor from a prototype matrix and label vector."""
    W = np.asarray(W, dtype=float)
    if omegas is None:
        omegas = [None] * len(W)
    protos = tuple(Prototype(w=w, label=int(c), omega=None if o is None else np.asarray(o, dtype=float))
                   for w, c, o in zip(W, labels, omegas))
    return LvqModel(prototypes=protos, metric=metric, omega=omega)


def _kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        if d2.sum() == 0:
            centers.append(X[rng.integers(n)])
        else:
            centers.append(X[rng.choice(n, p=d2 / d2.sum())])
    C = np.array(centers, dtype=float)
    for _ in range(max_iter):
        assign = np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
        new = C.copy()
        for c in range(k):
            members = X[assign == c]
            if len(members):
                new[c] = members.mean(axis=0)
        if np.array_equal(new, C):
            break
        C = new
    return C


def fit_plumbing(X, y, k: int = 1, metric: str = "identity", omega=None, omegas=None,
                 seed: int = 0) -> LvqModel:
    """Place ``k`` prototypes per class at class-conditional k-means centroids.

    This is not LVQ training; it only produces a reasonable prototype layout.
    Metric matrices are used as supplied (identity when none are given; for a
    local metric without ``omegas`` every prototype gets the identity).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if k < 1:
        raise ModelError("k: must be at least 1")
    if X.ndim != 2 or len(X) != len(y):
        raise ModelError("data: X must be (n, d) with one label per row")
    rng = np.random.default_rng(seed)
    W, labels = [], []
    for c in np.unique(y):
        Xc = X[y == c]
        if len(Xc) < k:
            raise ModelError(f"class {c}: has {len(Xc)} points, fewer than k={k}")
        W.append(_kmeans(Xc, k, rng))
        labels += [int(c)] * k
    W = np.vstack(W)
    if metric == "global" and omega is None:
        omega = np.eye(X.shape[1])
    if metric == "local" and omegas is None:
        omegas = [np.eye(X.shape[1])] * len(W)
    return make_model(W, labels, metric=metric, omega=omega if metric == "global" else None,
                      omegas=omegas if metric == "local" else None)
