import numpy as np
import pytest

from cflvq.bench import (BenchError, BenchSpec, export_csv, grid_oracle, housing_scenario, ingest_csv, make_blobs,
                         next_label, run_bench)
from cflvq.engine import CfRequest, explain
from cflvq.model import make_model
from cflvq.regularizers import Regularizer

UNIT = Regularizer.manhattan([1.0, 1.0])


def test_grid_oracle_demo(demo_model):
    pt, theta = grid_oracle(demo_model, [3.0, 0.0], 0, UNIT, box=(-1.0, 5.0), step=0.01)
    assert abs(theta - 2.0) <= 0.02
    assert demo_model.predict(pt) == 0


def test_grid_oracle_none(demo_model):
    assert grid_oracle(demo_model, [3.0, 0.0], 0, UNIT, box=([2.9, -0.1], [3.1, 0.1]), step=0.05) is None


def test_oracle_never_beats_engine():
    rng = np.random.default_rng(7)
    for _ in range(10):
        W = rng.uniform(-2, 2, size=(4, 2))
        m = make_model(W, [0, 0, 1, 1])
        x = rng.uniform(-2, 2, size=2)
        y = 1 - m.predict(x)
        alpha = rng.uniform(0.5, 2, size=2)
        reg = Regularizer.manhattan(alpha)
        res = explain(m, CfRequest(x=x, y_target=y, regularizer=reg))
        _, theta = grid_oracle(m, x, y, reg, box=(-3.0, 3.0), step=0.02)
        assert theta >= res.distance - 0.02 * alpha.sum()


def test_csv_ingest(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,2,0\n3,4.5,1\n-1,0,1\n")
    ds = ingest_csv(p)
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4.5], [-1, 0]])
    np.testing.assert_array_equal(ds.y, [0, 1, 1])
    assert ds.feature_names == ["a", "b"]


def test_csv_bad_cell(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("TotalBsmt,GrLivA,label\n1,2,0\n3,big,1\n")
    with pytest.raises(BenchError, match=r"row 2.*'GrLivA'"):
        ingest_csv(p)


def test_csv_round_trip(tmp_path):
    ds = make_blobs(classes=3, dim=4, n=60, seed=2)
    export_csv(ds, tmp_path / "b.csv")
    back = ingest_csv(tmp_path / "b.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)


def test_next_label():
    labels = np.array([0, 1, 2])
    assert [next_label(v, labels) for v in (0, 1, 2)] == [1, 2, 0]


def test_bench_small_complete():
    spec = BenchSpec(dataset={"kind": "synthetic", "classes": 2, "dim": 2, "n": 8}, folds=2,
                     prototypes_per_class=1)
    rep = run_bench(spec)
    assert len(rep.rows) == 6
    assert "speedup" in rep.to_csv().splitlines()[0]
    assert "glvq" in rep.to_table()


def test_bench_lgmlvq_ours_never_fails():
    spec = BenchSpec(dataset={"kind": "synthetic", "classes": 3, "dim": 3, "n": 60}, models=("lgmlvq",),
                     methods=("ours",), max_cases=5)
    rep = run_bench(spec)
    assert rep.row("lgmlvq", "ours").failure_rate == 0.0


def test_bench_deterministic():
    spec = BenchSpec(dataset={"kind": "synthetic", "n": 40}, models=("glvq",), methods=("ours",), max_cases=4)
    a, b = run_bench(spec), run_bench(spec)
    assert a.rows[0].mean_distance == b.rows[0].mean_distance


def test_bench_spec_errors(tmp_path):
    with pytest.raises(BenchError):
        BenchSpec(folds=1)
    with pytest.raises(BenchError):
        BenchSpec(models=("svm",))
    p = tmp_path / "s.json"
    p.write_text('{"bogus": 1}')
    with pytest.raises(BenchError):
        BenchSpec.from_json(p)
    with pytest.raises(BenchError, match="folds"):
        run_bench(BenchSpec(dataset={"kind": "synthetic", "n": 3}, folds=2))


def test_housing_scenario_shape():
    sc = housing_scenario()
    assert sc.model.dim == 4
    assert sc.model.predict(sc.x) != sc.y_target
