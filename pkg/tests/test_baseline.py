import numpy as np
import pytest

from cflvq.baseline import BaselineConfig, baseline_explain, nelder_mead
from cflvq.engine import CfRequest, explain
from cflvq.model import make_model
from cflvq.regularizers import Regularizer

UNIT = Regularizer.manhattan([1.0, 1.0])


def test_nelder_mead_quadratic():
    x, f, _ = nelder_mead(lambda v: float(((v - [1.0, -2.0]) ** 2).sum()), np.zeros(2),
                          BaselineConfig(ftol=1e-12))
    np.testing.assert_allclose(x, [1.0, -2.0], atol=1e-4)


def test_never_beats_engine(demo_model):
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(-1, 4, size=2)
        y = 1 - demo_model.predict(x)
        ours = explain(demo_model, CfRequest(x=x, y_target=y, regularizer=UNIT))
        ds = baseline_explain(demo_model, x, y, UNIT)
        if ds.success:
            assert ds.distance >= ours.distance - 1e-6


def test_already_in_class(demo_model):
    x = np.array([3.0, 0.0])
    res = baseline_explain(demo_model, x, 1, UNIT)
    np.testing.assert_array_equal(res.x_cf, x)
    assert res.distance == 0.0


def test_disconnected_region_does_not_raise():
    m = make_model([[0.0, 0.0], [2.0, 0.0], [8.0, 0.0]], [0, 1, 0], metric="local",
                   omegas=[np.eye(2), 2 * np.eye(2), 0.1 * np.eye(2)])
    res = baseline_explain(m, np.array([2.5, 0.0]), 0, Regularizer.euclidean(), BaselineConfig(restarts=1))
    assert len(res.per_target) >= 1
    if not res.success:
        assert res.per_target[-1].status == "invalid"


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(C=0)
    with pytest.raises(ValueError):
        BaselineConfig(contraction=1.5)
