import numpy as np
import pytest

from cflvq.regularizers import Regularizer, build_objective, evaluate, mad_weights, zero_mad_features
from cflvq.solver import solve


def test_manhattan_by_hand():
    assert evaluate(Regularizer.manhattan([1.0, 2.0]), [1.0, -1.0], [0.0, 0.0]) == 3.0


@pytest.mark.parametrize("reg", [Regularizer.manhattan([1.0, 3.0]), Regularizer.euclidean(),
                                 Regularizer.gl2([[2.0, 0.5], [0.5, 1.0]])])
def test_zero_at_x(reg):
    assert evaluate(reg, [0.3, -2.0], [0.3, -2.0]) == 0.0


def test_gl2_identity_is_euclidean(rng):
    gl2 = Regularizer.gl2(np.eye(3))
    for _ in range(100):
        a, b = rng.normal(size=(2, 3))
        assert abs(evaluate(gl2, a, b) - evaluate(Regularizer.euclidean(), a, b)) <= 1e-12


def test_validation():
    with pytest.raises(ValueError):
        Regularizer.manhattan([1.0, 0.0])
    with pytest.raises(ValueError):
        Regularizer.gl2([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Regularizer.gl2([[-1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Regularizer("cosine")


def test_mad_weights():
    X = np.column_stack([[1, 2, 3, 4, 5], [2, 2, 2, 2, 2], [0, 0, 0, 10, 0]]).astype(float)
    np.testing.assert_array_equal(mad_weights(X), [1.0, 1.0, 1.0])
    assert zero_mad_features(X) == [1, 2]
    np.testing.assert_allclose(mad_weights(np.array([[0.0], [2.0], [4.0], [10.0]])), [1 / 2.0])


def test_mad_short_columns():
    assert mad_weights(np.array([[2.0], [2.0], [2.0]]))[0] == 1.0
    assert mad_weights(np.array([[0.0], [0.0], [0.0], [10.0]]))[0] == 1.0


def test_euclidean_objective_form():
    spec = build_objective(Regularizer.euclidean(), [1.0, 2.0])
    np.testing.assert_array_equal(spec.P, np.eye(2))
    np.testing.assert_array_equal(spec.c, [-1.0, -2.0])


def test_manhattan_epigraph_unconstrained():
    spec = build_objective(Regularizer.manhattan([1.0]), [0.7])
    out = solve(spec)
    assert out.ok
    assert out.z[0] == pytest.approx(0.7, abs=1e-7)
    assert out.objective_value == pytest.approx(0.0, abs=1e-7)


def test_manhattan_epigraph_with_cap():
    spec = build_objective(Regularizer.manhattan([2.0]), [3.0]).add_ineq([[1.0, 0.0]], [1.0])
    out = solve(spec)
    assert out.ok
    assert out.z[0] == pytest.approx(1.0, abs=1e-7)
    assert out.objective_value == pytest.approx(4.0, abs=1e-6)


def test_gl2_objective_minimizer(rng):
    B = rng.normal(size=(3, 3))
    reg = Regularizer.gl2(B @ B.T + np.eye(3))
    x = rng.normal(size=3)
    spec = build_objective(reg, x)
    out = solve(spec)
    np.testing.assert_allclose(out.z, x, atol=1e-7)
