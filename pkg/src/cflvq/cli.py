"""Command-line front end: fit, predict, explain, bench, validate-model.

Exit codes: 0 success, 1 usage or input error, 2 no counterfactual found.
JSON goes to ``--output`` (or stdout); human-readable notes go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bench import MODEL_KINDS, BenchError, BenchSpec, ingest_csv, run_bench, fit_bench_model
from .constraints import ConstraintError, UserConstraints, load_constraints
from .engine import DEFAULT_EPSILON, CfRequest, RequestError, explain, margin, target_program
from .model import LvqModel, ModelError, load_model, save_model
from .regularizers import Regularizer, mad_weights, zero_mad_features
from .solver import dump_program

EXIT_OK, EXIT_USAGE, EXIT_NO_SOLUTION = 0, 1, 2


class UsageError(Exception):
    """Bad flag value; the message names the flag."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for "no solution" here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(doc, output: str | None) -> None:
    _emit(json.dumps(doc, indent=2) + "\n", output)


def parse_vector(text: str, flag: str = "--input") -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not np.all(np.isfinite(v)):
        raise UsageError(f"{flag}: values must be finite")
    return v


def _load_model(path: str) -> LvqModel:
    try:
        return load_model(path)
    except FileNotFoundError:
        raise UsageError(f"--model: no such file {path}") from None
    except ModelError as exc:
        raise UsageError(f"--model: {exc}") from None


def read_features(path: str, label_column: str = "label") -> np.ndarray:
    """Numeric CSV with a header; the label column is dropped when present."""
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
    except FileNotFoundError:
        raise UsageError(f"no such file {path}") from None
    if header is None:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in header]
    try:
        if label_column in header:
            return ingest_csv(path, label_column).X
        X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (BenchError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not np.all(np.isfinite(X)):
        raise UsageError(f"{path}: non-finite values")
    return X


def _regularizer(args, model: LvqModel) -> Regularizer:
    d = model.dim
    if args.regularizer == "euclidean":
        return Regularizer.euclidean()
    if args.regularizer == "gl2":
        if args.gl2_matrix:
            try:
                lam = np.asarray(json.loads(Path(args.gl2_matrix).read_text()), dtype=float)
            except (OSError, ValueError) as exc:
                raise UsageError(f"--gl2-matrix: {exc}") from None
        elif model.metric == "global":
            lam = model.omega.T @ model.omega
        elif model.metric == "identity":
            lam = np.eye(d)
        else:
            raise UsageError("--gl2-matrix: required for local-metric models")
        try:
            return Regularizer.gl2(lam)
        except ValueError as exc:
            raise UsageError(f"--gl2-matrix: {exc}") from None
    if not args.mad_from:
        _note("manhattan: no --mad-from given, using unit weights")
        return Regularizer.manhattan(np.ones(d))
    try:
        X = read_features(args.mad_from)
    except UsageError as exc:
        raise UsageError(f"--mad-from: {exc}") from None
    if X.shape[1] != d:
        raise UsageError(f"--mad-from: {X.shape[1]} feature columns, model dimension is {d}")
    zero = zero_mad_features(X)
    if zero:
        _note("!" * 60)
        _note(f"WARNING: features {zero} have zero MAD; their weight falls back to 1.")
        _note("Freeze them with --constraints if they must not change.")
        _note("!" * 60)
    return Regularizer.manhattan(mad_weights(X))


# -- subcommands --------------------------------------------------------------


def cmd_fit(args) -> int:
    try:
        ds = ingest_csv(args.data, args.label_column)
    except FileNotFoundError:
        raise UsageError(f"--data: no such file {args.data}") from None
    except BenchError as exc:
        raise UsageError(f"--data: {exc}") from None
    try:
        model = fit_bench_model(args.kind, ds.X, ds.y, args.prototypes_per_class, seed=args.seed)
    except ModelError as exc:
        raise UsageError(str(exc)) from None
    acc = float(np.mean(model.predict(ds.X) == ds.y))
    _note(f"fit {args.kind}: {model.n_prototypes} prototypes, dim {model.dim}, training accuracy {acc:.3f}")
    if args.output:
        save_model(model, args.output)
    else:
        _emit_json(model.to_dict(), None)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    if (args.input is None) == (args.data is None):
        raise UsageError("predict: give exactly one of --input or --data")
    X = parse_vector(args.input)[None] if args.input is not None else read_features(args.data)
    if X.shape[1] != model.dim:
        flag = "--input" if args.input is not None else "--data"
        raise UsageError(f"{flag}: {X.shape[1]} values, model dimension is {model.dim}")
    labels = [int(v) for v in np.atleast_1d(model.predict(X))]
    _note(f"predicted {len(labels)} point(s)")
    _emit_json({"labels": labels}, args.output)
    return EXIT_OK


def cmd_explain(args) -> int:
    model = _load_model(args.model)
    x = parse_vector(args.input)
    if x.size != model.dim:
        raise UsageError(f"--input: {x.size} values, model dimension is {model.dim}")
    if args.target_label not in set(model.labels.tolist()):
        raise UsageError(f"--target-label: {args.target_label} is not a label of the model")
    if not args.epsilon > 0:
        raise UsageError("--epsilon: must be positive")
    uc = UserConstraints()
    if args.constraints:
        try:
            uc = load_constraints(args.constraints)
            uc.check_dim(model.dim)
        except FileNotFoundError:
            raise UsageError(f"--constraints: no such file {args.constraints}") from None
        except ConstraintError as exc:
            raise UsageError(f"--constraints: {exc}") from None
    req = CfRequest(x=x, y_target=args.target_label, regularizer=_regularizer(args, model), epsilon=args.epsilon,
                    user_constraints=uc, parallel=args.parallel)
    if args.dump_programs:
        for i in model.indices_with_label(args.target_label):
            sys.stderr.write(f"# program for target prototype {i}\n")
            sys.stderr.write(dump_program(target_program(model, req, i)))
    try:
        res = explain(model, req)
    except RequestError as exc:
        raise UsageError(str(exc)) from None
    doc = res.to_dict()
    doc["status"] = "ok" if res.success else "no-solution"
    _emit_json(doc, args.output)
    current = int(model.predict(x))
    if res.success:
        _note(f"prediction {current} -> {args.target_label}: distance {res.distance:.6g} "
              f"via prototype {res.target_prototype}, margin {margin(model, res.x_cf, args.target_label):.3g}, "
              f"{res.total_wall_time_ms:.1f} ms")
        return EXIT_OK
    _note(f"no counterfactual with label {args.target_label}; per-target statuses:")
    for t in res.per_target:
        _note(f"  prototype {t.index}: {t.status}" + (f" ({t.message})" if t.message else ""))
    return EXIT_NO_SOLUTION


def cmd_bench(args) -> int:
    try:
        spec = BenchSpec.from_json(args.spec)
    except FileNotFoundError:
        raise UsageError(f"--spec: no such file {args.spec}") from None
    except (BenchError, json.JSONDecodeError) as exc:
        raise UsageError(f"--spec: {exc}") from None
    if args.seed_given:
        spec.seed = args.seed
    try:
        report = run_bench(spec)
    except (BenchError, ModelError) as exc:
        raise UsageError(str(exc)) from None
    _note(report.to_table())
    _emit(report.to_csv(), args.output)
    return EXIT_OK


def cmd_validate_model(args) -> int:
    model = _load_model(args.model)
    labels = sorted(set(model.labels.tolist()))
    W = model.W
    dup = [(i, j) for i in range(len(W)) for j in range(i + 1, len(W))
           if model.labels[i] != model.labels[j] and np.array_equal(W[i], W[j])]
    doc = {"valid": True, "dim": model.dim, "metric": model.metric, "n_prototypes": model.n_prototypes,
           "labels": labels, "coincident_prototypes": dup}
    if len(labels) < 2:
        _note("warning: model has a single label; no counterfactual can exist")
    if dup:
        _note(f"warning: prototypes with different labels coincide: {dup}")
    _note(f"model ok: {model.n_prototypes} prototypes, {len(labels)} labels, dim {model.dim}, {model.metric} metric")
    _emit_json(doc, args.output)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="decision margin (default 1e-4)")
    common.add_argument("--output", help="write the result here instead of stdout")
    common.add_argument("--parallel", action="store_true", help="solve target programs concurrently")

    p = _Parser(prog="cflvq", description="Counterfactual explanations for LVQ models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common], help="place prototypes on a labeled CSV")
    f.add_argument("--data", required=True, help="CSV with a header and an integer label column")
    f.add_argument("--label-column", default="label")
    f.add_argument("--kind", choices=MODEL_KINDS, default="glvq")
    f.add_argument("--prototypes-per-class", type=int, default=1)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", parents=[common], help="classify points")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", help='one point, e.g. "0.5,1.2"')
    pr.add_argument("--data", help="CSV of points (a label column is ignored)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("explain", parents=[common], help="compute a counterfactual")
    e.add_argument("--model", required=True)
    e.add_argument("--input", required=True, help='point to explain, e.g. "3,0"')
    e.add_argument("--target-label", type=int, required=True)
    e.add_argument("--regularizer", choices=("manhattan", "euclidean", "gl2"), default="manhattan")
    e.add_argument("--mad-from", help="CSV whose per-feature MAD sets the Manhattan weights")
    e.add_argument("--gl2-matrix", help="JSON matrix for the gl2 regularizer (default: the model metric)")
    e.add_argument("--constraints", help="JSON file with box, frozen and linear constraints")
    e.add_argument("--dump-programs", action="store_true", help="write each target program to stderr")
    e.set_defaults(func=cmd_explain)

    b = sub.add_parser("bench", parents=[common], help="run the cross-validated comparison")
    b.add_argument("--spec", required=True, help="JSON benchmark specification")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate-model", parents=[common], help="check a model file")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_validate_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if not math.isfinite(args.epsilon):
        _note("cflvq: error: --epsilon: must be finite")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _note(f"cflvq {args.command}: error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
