import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cflvq.constraints import (ConstraintError, UserConstraints, apply_user_constraints, linear_constraints,
                               linearize_concave_part, load_constraints, quadratic_constraints)
from cflvq.engine import CfRequest, explain
from cflvq.model import LvqModel, make_model
from cflvq.regularizers import Regularizer, build_objective

from conftest import random_model

EPS = 1e-4


def test_identity_pair(demo_model):
    (c,) = linear_constraints(demo_model, 0, EPS)
    np.testing.assert_array_equal(c.q, [2.0, 0.0])
    assert c.r == -2.0
    # 2 x1 - 2 + eps on the boundary-distance scale
    assert c.value(np.array([1.0, 0.0]), EPS) == pytest.approx(EPS)


def test_degenerate_pair():
    # the model rejects coincident prototypes, so build one that slips past via a global metric
    m = make_model([[0.0, 0.0], [1.0, 0.0]], [0, 1], metric="global", omega=[[0.0, 0.0], [0.0, 1.0]])
    (c,) = linear_constraints(m, 0, EPS)
    assert c.degenerate
    assert c.value(np.zeros(2), EPS) == EPS


def test_global_pair():
    m = make_model([[0.0, 0.0], [1.0, 1.0]], [0, 1], metric="global", omega=np.diag([2.0, 1.0]))
    (c,) = linear_constraints(m, 0, EPS)
    np.testing.assert_allclose(c.q, [4.0, 1.0])
    assert c.r == pytest.approx(-2.5)


def test_local_equal_metrics_reduce_to_linear(demo_model):
    m = make_model(demo_model.W, demo_model.labels, metric="local", omegas=[np.eye(2), np.eye(2)])
    (qc,) = quadratic_constraints(m, 0, EPS)
    (lc,) = linear_constraints(demo_model, 0, EPS)
    assert not np.any(qc.Q)
    np.testing.assert_array_equal(qc.q, lc.q)
    assert qc.r == lc.r


def test_local_pair_by_hand():
    m = make_model([[0.0, 0.0], [2.0, 0.0]], [0, 1], metric="local", omegas=[np.eye(2), 2 * np.eye(2)])
    (c,) = quadratic_constraints(m, 0, EPS)
    np.testing.assert_allclose(c.Q, -3 * np.eye(2))
    np.testing.assert_allclose(c.q, [8.0, 0.0])
    assert c.r == pytest.approx(-8.0)
    assert not c.is_convex


def test_linear_rejects_local(rng):
    with pytest.raises(ConstraintError):
        linear_constraints(random_model(rng, "local"), 0)


@pytest.mark.parametrize("metric", ["identity", "global", "local"])
def test_value_matches_distances(rng, metric):
    m = random_model(rng, metric, classes=3, dim=4, per_class=2)
    rows_for = quadratic_constraints if metric == "local" else linear_constraints
    for _ in range(50):
        x = rng.normal(size=4) * 3
        i = int(rng.integers(m.n_prototypes))
        for c in rows_for(m, i, EPS):
            expect = m.distance(x, i) + EPS - m.distance(x, c.j)
            assert c.value(x, EPS) == pytest.approx(expect, abs=1e-9)


def test_linearization_by_hand():
    rho, r = linearize_concave_part(np.eye(2), [2.0, 0.0])
    np.testing.assert_array_equal(rho, [2.0, 0.0])
    assert r == -2.0
    assert rho @ [2.0, 0.0] + r == 2.0
    rho, r = linearize_concave_part(np.eye(2), [0.0, 0.0])
    assert not np.any(rho) and r == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_linearization_is_a_minorant(seed):
    rng = np.random.default_rng(seed)
    om = rng.normal(size=(3, 3))
    lam = om.T @ om
    xk = rng.normal(size=3) * 2
    rho, r = linearize_concave_part(lam, xk)
    P = rng.normal(size=(1000, 3)) * 4
    g = 0.5 * np.einsum("nd,de,ne->n", P, lam, P)
    assert np.all(P @ rho + r <= g + 1e-9)


def test_frozen_feature_is_exact(demo_model):
    uc = UserConstraints(frozen=(0,))
    x = np.array([5.0, 1.0])
    m = make_model([[0.0, 0.0], [5.0, 3.0], [6.0, 0.0]], [0, 0, 1])
    res = explain(m, CfRequest(x=x, y_target=0, regularizer=Regularizer.manhattan([1.0, 1.0]),
                               user_constraints=uc))
    assert res.success
    assert res.x_cf[0] == 5.0


def test_linear_user_row_holds():
    m = make_model([[0.0, 3.0], [3.0, 0.0]], [0, 1])
    uc = UserConstraints(linear=(([1.0, -1.0], 0.0),))
    res = explain(m, CfRequest(x=np.array([4.0, 0.5]), y_target=0, regularizer=Regularizer.manhattan([1.0, 1.0]),
                               user_constraints=uc))
    assert res.success
    assert res.x_cf[0] - res.x_cf[1] <= 1e-8


def test_empty_constraints_leave_spec_alone():
    spec = build_objective(Regularizer.manhattan([1.0, 2.0]), [1.0, 1.0])
    assert apply_user_constraints(spec, UserConstraints(), [1.0, 1.0]) is spec


def test_constraint_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"box": {"lower": [0, 0], "upper": [1, 2]}, "frozen": [1], '
                    '"linear": [{"a": [1, -1], "b": 0}]}')
    uc = load_constraints(path)
    assert uc.frozen == (1,)
    assert UserConstraints.from_dict(uc.to_dict()).to_dict() == uc.to_dict()
    with pytest.raises(ConstraintError, match="box.lower"):
        uc.check_dim(1)
    with pytest.raises(ConstraintError, match="frozen"):
        UserConstraints(frozen=(3,)).check_dim(2)
    with pytest.raises(ConstraintError, match="lower > upper"):
        UserConstraints(lower=[1.0], upper=[0.0])
