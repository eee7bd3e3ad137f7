"""Benchmark harness: synthetic and CSV data, k-fold runs, reports and a grid oracle."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baseline import BaselineConfig, baseline_explain
from .constraints import UserConstraints
from .engine import DEFAULT_EPSILON, CfRequest, explain
from .model import LvqModel, fit_plumbing, make_model
from .regularizers import Regularizer, evaluate, mad_weights

MODEL_KINDS = ("glvq", "gmlvq", "lgmlvq")
METHODS = ("ours", "baseline-ds")


class BenchError(ValueError):
    pass


# -- data -------------------------------------------------------------------


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    label_column: str = "label"


def make_blobs(classes: int = 2, dim: int = 2, n: int = 200, separation: float = 4.0, seed: int = 0,
               sigma: float = 1.0) -> Dataset:
    """Anisotropic Gaussian classes whose centers form a regular polygon of side ``separation``.

    The polygon lives in a random 2-D plane of the feature space.
    """
    if classes < 2 or dim < 1 or n < classes:
        raise BenchError("need classes >= 2, dim >= 1 and n >= classes")
    rng = np.random.default_rng(seed)
    if classes == 2:
        ring = np.array([[-0.5, 0.0], [0.5, 0.0]]) * separation
    else:
        radius = separation / (2 * math.sin(math.pi / classes))
        ang = 2 * math.pi * np.arange(classes) / classes
        ring = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 1:
        centers = ring[:, :1] * 2.0
    else:
        basis, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
        centers = ring @ basis.T
    counts = np.full(classes, n // classes)
    counts[: n % classes] += 1
    X, y = [], []
    for c in range(classes):
        stretch = rng.uniform(0.5, 1.5, size=dim)
        rot, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        A = sigma * rot * stretch
        X.append(centers[c] + rng.normal(size=(counts[c], dim)) @ A.T)
        y.append(np.full(counts[c], c))
    X, y = np.vstack(X), np.concatenate(y)
    perm = rng.permutation(len(y))
    return Dataset(X=X[perm], y=y[perm], feature_names=[f"f{j}" for j in range(dim)])


def ingest_csv(path, label_column: str = "label") -> Dataset:
    """Read a numeric CSV with a header row; the label column must hold integers."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise BenchError(f"{path}: empty file") from None
    if label_column not in header:
        raise BenchError(f"{path}: no column named {label_column!r}")
    li = header.index(label_column)
    names = [h for k, h in enumerate(header) if k != li]
    X, y = [], []
    for row_no, row in enumerate(reader, start=1):
        line = row_no + 1
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise BenchError(f"{path}: row {row_no} (line {line}) has {len(row)} cells, header has {len(header)}")
        feats = []
        for k, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise BenchError(f"{path}: row {row_no} (line {line}), column {header[k]!r}: "
                                 f"not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise BenchError(f"{path}: row {row_no} (line {line}), column {header[k]!r}: non-finite value")
            if k == li:
                if v != int(v):
                    raise BenchError(f"{path}: row {row_no} (line {line}), column {header[k]!r}: "
                                     f"label must be an integer")
                y.append(int(v))
            else:
                feats.append(v)
        X.append(feats)
    if not X:
        raise BenchError(f"{path}: no data rows")
    return Dataset(X=np.array(X, dtype=float), y=np.array(y, dtype=int), feature_names=names,
                   label_column=label_column)


def export_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ds.feature_names + [ds.label_column])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])


# -- models -----------------------------------------------------------------


def _whitening_omega(cov: np.ndarray, shrink: float = 0.3) -> np.ndarray:
    d = cov.shape[0]
    cov = (1 - shrink) * cov + shrink * np.trace(cov) / d * np.eye(d)
    vals, vecs = np.linalg.eigh(cov)
    lam = vecs @ np.diag(1.0 / np.maximum(vals, 1e-12)) @ vecs.T
    lam *= d / np.trace(lam)
    vals, vecs = np.linalg.eigh(lam)
    return vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def fit_bench_model(kind: str, X, y, k: int, seed: int = 0) -> LvqModel:
    """Prototype model of the given kind with covariance-derived metrics.

    ``gmlvq`` whitens the pooled within-class scatter; ``lgmlvq`` whitens the
    scatter of the training points each prototype wins.
    """
    if kind not in MODEL_KINDS:
        raise BenchError(f"unknown model kind {kind!r}")
    base = fit_plumbing(X, y, k=k, seed=seed)
    if kind == "glvq":
        return base
    d = X.shape[1]
    if kind == "gmlvq":
        resid = np.vstack([X[y == c] - X[y == c].mean(axis=0) for c in np.unique(y)])
        omega = _whitening_omega(resid.T @ resid / max(len(resid) - 1, 1))
        return make_model(base.W, base.labels, metric="global", omega=omega)
    omegas = []
    for i, p in enumerate(base.prototypes):
        same = np.flatnonzero(y == p.label)
        own = base.indices_with_label(p.label)
        win = np.argmin(((X[same][:, None, :] - base.W[own][None]) ** 2).sum(-1), axis=1)
        pts = X[same][np.array(own)[win] == i]
        if len(pts) > d:
            cov = np.cov(pts, rowvar=False).reshape(d, d)
        else:
            cov = np.eye(d)
        omegas.append(_whitening_omega(cov, shrink=0.5))
    return make_model(base.W, base.labels, metric="local", omegas=omegas)


# -- grid oracle ------------------------------------------------------------


def grid_oracle(model: LvqModel, x, y_target: int, regularizer: Regularizer, box, step: float,
                epsilon: float = DEFAULT_EPSILON, chunk: int = 200_000):
    """Brute-force search over a regular grid: best point with ``margin >= epsilon``.

    ``box`` is ``(lower, upper)``.  Returns ``(point, theta)`` or ``None``.
    """
    x = model.check_input(x)
    d = model.dim
    if d > 3:
        raise BenchError("grid oracle supports at most 3 dimensions")
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in box)
    if np.any(x < lo) or np.any(x > hi):
        raise BenchError("box must contain the query point")
    axes = [lo[j] + step * np.arange(int(math.floor((hi[j] - lo[j]) / step + 1e-9)) + 1) for j in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    right = model.labels == y_target
    best, best_theta = None, math.inf
    for start in range(0, len(grid), chunk):
        G = grid[start: start + chunk]
        D = model.distances(G)
        ok = D[:, ~right].min(axis=1) - D[:, right].min(axis=1) >= epsilon
        if not np.any(ok):
            continue
        cand = G[ok]
        diff = cand - x
        if regularizer.kind == "manhattan":
            th = np.abs(diff) @ regularizer.alpha
        elif regularizer.kind == "euclidean":
            th = np.einsum("nd,nd->n", diff, diff)
        else:
            th = np.einsum("nd,de,ne->n", diff, regularizer.lam, diff)
        k = int(np.argmin(th))
        if th[k] < best_theta:
            best, best_theta = cand[k].copy(), float(th[k])
    if best is None:
        return None
    return best, evaluate(regularizer, best, x)


# -- benchmark --------------------------------------------------------------


@dataclass
class BenchSpec:
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic"})
    models: tuple[str, ...] = MODEL_KINDS
    prototypes_per_class: int = 3
    folds: int = 4
    regularizer: str = "manhattan"
    epsilon: float = DEFAULT_EPSILON
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    max_cases: int | None = None

    def __post_init__(self):
        self.models = tuple(self.models)
        self.methods = tuple(self.methods)
        if self.folds < 2:
            raise BenchError("folds must be at least 2")
        if bad := set(self.models) - set(MODEL_KINDS):
            raise BenchError(f"unknown model kinds {sorted(bad)}")
        if bad := set(self.methods) - set(METHODS):
            raise BenchError(f"unknown methods {sorted(bad)}")
        if self.regularizer not in ("manhattan", "euclidean"):
            raise BenchError("regularizer must be 'manhattan' or 'euclidean'")
        kind = self.dataset.get("kind", "synthetic")
        if kind not in ("synthetic", "csv"):
            raise BenchError(f"unknown dataset kind {kind!r}")

    @classmethod
    def from_json(cls, path) -> "BenchSpec":
        doc = json.loads(Path(path).read_text())
        try:
            return cls(**doc)
        except TypeError as exc:
            raise BenchError(f"{path}: {exc}") from exc

    def load_data(self) -> tuple[str, Dataset]:
        cfg = dict(self.dataset)
        if cfg.pop("kind", "synthetic") == "csv":
            path = cfg["path"]
            return Path(path).stem, ingest_csv(path, cfg.get("label_column", "label"))
        params = {"classes": 2, "dim": 2, "n": 200, "separation": 4.0, "seed": self.seed}
        params.update(cfg)
        name = "synthetic-c{classes}-d{dim}-n{n}-s{separation:g}".format(**params)
        return name, make_blobs(**params)


@dataclass
class BenchRow:
    dataset: str
    model: str
    method: str
    n_cases: int
    mean_distance: float
    median_wall_ms: float
    failure_rate: float


@dataclass
class BenchReport:
    rows: list[BenchRow]
    speedups: dict[tuple[str, str], float]
    # per-case records: (fold, test index, method, distance or None, wall ms)
    cases: list[tuple] = field(default_factory=list, repr=False)
    fold_stats: list[dict] = field(default_factory=list, repr=False)

    def row(self, model: str, method: str) -> BenchRow:
        return next(r for r in self.rows if r.model == model and r.method == method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["dataset", "model", "method", "n_cases", "mean_distance", "median_wall_ms", "failure_rate",
                    "speedup"])
        for r in self.rows:
            sp = self.speedups.get((r.dataset, r.model)) if r.method == "ours" else None
            w.writerow([r.dataset, r.model, r.method, r.n_cases, f"{r.mean_distance:.6g}",
                        f"{r.median_wall_ms:.6g}", f"{r.failure_rate:.6g}", "" if sp is None else f"{sp:.3g}"])
        return buf.getvalue()

    def to_table(self) -> str:
        """Aligned text table: one line per model, one column block per method."""
        datasets = sorted({r.dataset for r in self.rows})
        methods = [m for m in METHODS if any(r.method == m for r in self.rows)]
        models = [m for m in MODEL_KINDS if any(r.model == m for r in self.rows)]
        short = {"ours": "Ours", "baseline-ds": "DS"}
        lines = []
        for ds in datasets:
            head = f"{'model':<8}" + "".join(f"{short[m] + ' dist':>12}{short[m] + ' ms':>10}{short[m] + ' fail':>10}"
                                            for m in methods)
            if "ours" in methods and "baseline-ds" in methods:
                head += f"{'speedup':>9}"
            lines += [ds, head, "-" * len(head)]
            for mk in models:
                line = f"{mk:<8}"
                for m in methods:
                    r = self.row(mk, m)
                    line += f"{r.mean_distance:>12.4f}{r.median_wall_ms:>10.2f}{r.failure_rate:>10.1%}"
                if (ds, mk) in self.speedups:
                    line += f"{self.speedups[(ds, mk)]:>8.1f}x"
                lines.append(line)
            lines.append("")
        return "\n".join(lines)


def fold_indices(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    return [(np.sort(np.concatenate(parts[:k] + parts[k + 1:])), np.sort(parts[k])) for k in range(folds)]


def standardizer(X_train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def next_label(label: int, labels: np.ndarray) -> int:
    labels = np.sort(np.unique(labels))
    k = int(np.searchsorted(labels, label))
    return int(labels[(k + 1) % len(labels)])


def run_bench(spec: BenchSpec, baseline_cfg: BaselineConfig | None = None) -> BenchReport:
    """k-fold protocol: fit, standardize and weight on the training fold; explain every test point."""
    name, ds = spec.load_data()
    classes = np.unique(ds.y)
    if len(ds.y) < spec.folds * len(classes):
        raise BenchError(f"dataset has {len(ds.y)} rows; need at least folds*classes = {spec.folds * len(classes)}")
    splits = fold_indices(len(ds.y), spec.folds, spec.seed)
    for train, _ in splits:
        counts = np.array([(ds.y[train] == c).sum() for c in classes])
        if counts.min() < 1:
            raise BenchError("a training fold is missing a class")
    k = spec.prototypes_per_class
    records = {(mk, me): {"dist": [], "time": [], "fail": 0, "n": 0} for mk in spec.models for me in spec.methods}
    cases, fold_stats = [], []
    for f, (train, test) in enumerate(splits):
        mean, std = standardizer(ds.X[train])
        Xtr = (ds.X[train] - mean) / std
        Xte = (ds.X[test] - mean) / std
        alpha = mad_weights(Xtr)
        fold_stats.append({"fold": f, "train": train, "test": test, "mean": mean, "std": std, "alpha": alpha})
        reg = Regularizer.manhattan(alpha) if spec.regularizer == "manhattan" else Regularizer.euclidean()
        if spec.max_cases is not None:
            Xte, test = Xte[: spec.max_cases], test[: spec.max_cases]
        for mk in spec.models:
            kk = min(k, int(min((ds.y[train] == c).sum() for c in classes)))
            model = fit_bench_model(mk, Xtr, ds.y[train], kk, seed=spec.seed)
            for xi, ti in zip(Xte, test):
                yc = next_label(model.predict(xi), classes)
                for me in spec.methods:
                    rec = records[(mk, me)]
                    t0 = time.perf_counter()
                    if me == "ours":
                        res = explain(model, CfRequest(x=xi, y_target=yc, regularizer=reg, epsilon=spec.epsilon,
                                                       user_constraints=UserConstraints()))
                    else:
                        res = baseline_explain(model, xi, yc, reg, baseline_cfg, epsilon=spec.epsilon)
                    wall = (time.perf_counter() - t0) * 1e3
                    rec["n"] += 1
                    rec["time"].append(wall)
                    if res.success:
                        rec["dist"].append(res.distance)
                    else:
                        rec["fail"] += 1
                    cases.append((f, int(ti), mk, me, res.distance, wall))
    rows = []
    for (mk, me), rec in records.items():
        rows.append(BenchRow(dataset=name, model=mk, method=me, n_cases=rec["n"],
                             mean_distance=float(np.mean(rec["dist"])) if rec["dist"] else math.nan,
                             median_wall_ms=float(np.median(rec["time"])) if rec["time"] else math.nan,
                             failure_rate=rec["fail"] / rec["n"] if rec["n"] else 0.0))
    speedups = {}
    if "ours" in spec.methods and "baseline-ds" in spec.methods:
        for mk in spec.models:
            ours = np.median(records[(mk, "ours")]["time"])
            ds_t = np.median(records[(mk, "baseline-ds")]["time"])
            speedups[(name, mk)] = float(ds_t / ours)
    return BenchReport(rows=rows, speedups=speedups, cases=cases, fold_stats=fold_stats)


def report_to_dict(report: BenchReport) -> dict:
    return {"rows": [asdict(r) for r in report.rows],
            "speedups": [{"dataset": d, "model": m, "speedup": s} for (d, m), s in report.speedups.items()]}


# -- constrained housing scenario -------------------------------------------

HOUSING_FEATURES = ["TotalBsmt", "1stFlr", "2ndFlr", "GrLivA"]


@dataclass
class HousingScenario:
    model: LvqModel
    x: np.ndarray
    y_target: int
    regularizer: Regularizer
    constraint: UserConstraints
    mean: np.ndarray
    std: np.ndarray

    def to_raw(self, z) -> np.ndarray:
        return np.asarray(z) * self.std + self.mean


def housing_scenario(seed: int = 0, n: int = 400) -> HousingScenario:
    """Synthetic two-class housing data where the cheapest route to the other class
    grows the second floor past the first.

    The model lives in standardized coordinates, so the raw-unit constraint
    ``2ndFlr <= 1stFlr`` becomes ``std2*z2 - std1*z1 <= mean1 - mean2``.
    """
    rng = np.random.default_rng(seed)
    half = n // 2
    # label 1: large one-storey houses; label 0: two-storey houses with a small ground floor
    first1 = rng.normal(1150, 120, half)
    second1 = np.clip(rng.normal(450, 150, half), 0, None)
    bsmt1 = np.clip(rng.normal(300, 250, half), 0, None)
    first0 = rng.normal(700, 120, half)
    second0 = rng.normal(1500, 200, half)
    bsmt0 = np.clip(rng.normal(500, 250, half), 0, None)
    X1 = np.column_stack([bsmt1, first1, second1, first1 + second1 + rng.normal(0, 40, half)])
    X0 = np.column_stack([bsmt0, first0, second0, first0 + second0 + rng.normal(0, 40, half)])
    X = np.vstack([X0, X1])
    y = np.r_[np.zeros(half, int), np.ones(half, int)]
    mean, std = standardizer(X)
    Z = (X - mean) / std
    model = fit_plumbing(Z, y, k=1, seed=seed)
    reg = Regularizer.manhattan(mad_weights(Z))
    x_raw = np.array([0.0, 1120.0, 468.0, 1588.0])
    a = np.zeros(4)
    a[1], a[2] = -std[1], std[2]
    uc = UserConstraints(linear=((a, float(mean[1] - mean[2])),))
    return HousingScenario(model=model, x=(x_raw - mean) / std, y_target=0, regularizer=reg, constraint=uc,
                           mean=mean, std=std)
