import math

import numpy as np
import pytest

from cflvq import ccp
from cflvq.constraints import UserConstraints, apply_user_constraints, quadratic_constraints
from cflvq.engine import CfRequest, explain, solve_target
from cflvq.model import make_model
from cflvq.regularizers import Regularizer, build_objective, evaluate
from cflvq.solver import OPTIMAL

from conftest import random_model

EPS = 1e-4


def two_basin_model():
    return make_model([[0.0, 0.0], [2.0, 0.0]], [0, 1], metric="local", omegas=[np.eye(2), 2 * np.eye(2)])


def problem_for(model, target, reg, x, uc=UserConstraints()):
    base = apply_user_constraints(build_objective(reg, x), uc, x)
    return ccp.DcpProblem(base=base, rows=quadratic_constraints(model, target, EPS), epsilon=EPS,
                          theta=lambda xp: evaluate(reg, xp, x))


def test_suggest_is_prototype(rng):
    m = random_model(rng, "local", classes=3, dim=3, per_class=2)
    for i in range(m.n_prototypes):
        np.testing.assert_array_equal(ccp.suggest(m, i), m.prototypes[i].w)


def test_suggest_feasible(rng):
    m = random_model(rng, "local", classes=3, dim=3, per_class=2)
    for i in range(m.n_prototypes):
        rows = quadratic_constraints(m, i, EPS)
        p = m.prototypes[i].w
        assert all(r.convex_part(p, EPS) - r.concave_part(p) <= 0 for r in rows)


def test_two_basins():
    m = two_basin_model()
    x = np.array([3.0, 0.0])
    out = ccp.improve(problem_for(m, 0, Regularizer.euclidean(), x), ccp.suggest(m, 0))
    assert out.status == OPTIMAL
    xcf = out.z[:2]
    assert m.predict(xcf) == 0
    assert math.sqrt(evaluate(Regularizer.euclidean(), xcf, x)) <= 5 / 3 + 1e-3
    lo = (16 - math.sqrt(64 + 12 * EPS)) / 6
    hi = (16 + math.sqrt(64 + 12 * EPS)) / 6
    assert xcf[0] <= lo + 1e-6 or xcf[0] >= hi - 1e-6
    assert out.trace.monotone(1e-9)
    assert out.trace.max_minorant_gap <= 1e-9


def test_equal_metrics_one_iteration(demo_model):
    m = make_model(demo_model.W, demo_model.labels, metric="local", omegas=[np.eye(2), np.eye(2)])
    x = np.array([3.0, 0.0])
    reg = Regularizer.manhattan([1.0, 1.0])
    out = ccp.improve(problem_for(m, 0, reg, x), ccp.suggest(m, 0))
    assert out.ok and out.iterations == 1
    np.testing.assert_allclose(out.z[:2], [1 - EPS / 4, 0.0], atol=1e-7)


def test_infeasible_box_does_not_converge():
    m = two_basin_model()
    x = np.array([3.0, 0.0])
    # the box sits inside the wrong class's region
    uc = UserConstraints(lower=np.array([1.9, -0.1]), upper=np.array([2.1, 0.1]))
    out = ccp.improve(problem_for(m, 0, Regularizer.euclidean(), x, uc), ccp.suggest(m, 0))
    assert out.status != OPTIMAL
    assert out.trace.slack_sums[-1] > 1e-3


def test_trace_monotone_random(rng):
    for _ in range(5):
        m = random_model(rng, "local", classes=3, dim=3, per_class=2)
        x = rng.normal(size=3) * 3
        y = (m.predict(x) + 1) % 3
        reg = Regularizer.manhattan(rng.uniform(0.5, 2.0, 3))
        for i in m.indices_with_label(y):
            res = solve_target(m, CfRequest(x=x, y_target=y, regularizer=reg), i)
            assert res.status == OPTIMAL
            if res.ccp_trace is not None:
                assert res.ccp_trace.monotone(1e-9)
                assert res.ccp_trace.max_minorant_gap <= 1e-9


def test_engine_local_validity(rng):
    m = random_model(rng, "local", classes=2, dim=2, per_class=3)
    for _ in range(10):
        x = rng.normal(size=2) * 3
        y = 1 - m.predict(x)
        res = explain(m, CfRequest(x=x, y_target=y, regularizer=Regularizer.euclidean()))
        assert res.success and m.predict(res.x_cf) == y


def test_config_validation():
    with pytest.raises(ValueError):
        ccp.CcpConfig(mu=1.0)
