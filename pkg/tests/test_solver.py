import numpy as np
import pytest

from cflvq.solver import (INFEASIBLE, OPTIMAL, ProgramSpec, QuadRow, dump_program, solve, verify_kkt)


def qp_example():
    return ProgramSpec(n=2, P=np.eye(2), c=np.array([-3.0, 0.0]), G=np.array([[1.0, 0.0]]), h=np.array([1.0]))


def test_lp_lower_bound():
    spec = ProgramSpec(n=1, c=np.array([1.0]), G=np.array([[-1.0]]), h=np.array([-1.0]))
    out = solve(spec)
    assert out.status == OPTIMAL
    assert out.z[0] == pytest.approx(1.0, abs=1e-7)


def test_qp_clipped():
    out = solve(qp_example())
    assert out.ok
    np.testing.assert_allclose(out.z, [1.0, 0.0], atol=1e-7)
    assert out.objective_value == pytest.approx(-2.5, abs=1e-7)
    assert out.duals.ineq[0] == pytest.approx(2.0, abs=1e-6)


def test_qcqp_projection_onto_disc():
    spec = ProgramSpec(n=2, P=np.eye(2), c=np.array([-3.0, 0.0]),
                       quad=(QuadRow(P=np.eye(2), q=np.zeros(2), r=-0.5),))
    out = solve(spec)
    assert out.ok
    np.testing.assert_allclose(out.z, [1.0, 0.0], atol=1e-6)
    assert verify_kkt(spec, out.z, out.duals).worst() <= 1e-6


def test_qcqp_infeasible():
    spec = ProgramSpec(n=2, c=np.array([1.0, 0.0]),
                       G=np.array([[1.0, 0.0]]), h=np.array([-3.0]),
                       quad=(QuadRow(P=np.eye(2), q=np.zeros(2), r=-0.5),))
    assert solve(spec).status == INFEASIBLE


def test_lp_infeasible():
    spec = ProgramSpec(n=1, c=np.array([1.0]), G=np.array([[1.0], [-1.0]]), h=np.array([0.0, -1.0]))
    assert solve(spec).status == INFEASIBLE


def test_bounds_infeasible():
    spec = ProgramSpec(n=1, c=np.array([1.0]), lb=np.array([1.0]), ub=np.array([0.0]))
    assert solve(spec).status == INFEASIBLE


def test_equality_and_bounds():
    # min x + 2y  s.t.  x + y = 1,  0 <= x, y
    spec = ProgramSpec(n=2, c=np.array([1.0, 2.0]), A=np.array([[1.0, 1.0]]), b=np.array([1.0]),
                       lb=np.zeros(2))
    out = solve(spec)
    np.testing.assert_allclose(out.z, [1.0, 0.0], atol=1e-7)
    assert verify_kkt(spec, out.z, out.duals).worst() <= 1e-6


def test_kkt_report():
    spec = qp_example()
    out = solve(spec)
    assert verify_kkt(spec, out.z, out.duals).worst() <= 1e-6
    bad = verify_kkt(spec, out.z + np.array([0.1, 0.0]), out.duals)
    assert bad.primal_feasibility >= 0.09


def test_kkt_unconstrained_stationary(rng):
    B = rng.normal(size=(4, 4))
    P = B @ B.T + np.eye(4)
    q = rng.normal(size=4)
    spec = ProgramSpec(n=4, P=P, c=q)
    z = np.linalg.solve(P, -q)
    out = solve(spec)
    rep = verify_kkt(spec, z, out.duals)
    assert rep.stationarity <= 1e-10


def test_warm_start_same_answer(rng):
    spec = ProgramSpec(n=2, P=np.eye(2), c=np.array([-3.0, -1.0]),
                       quad=(QuadRow(P=np.diag([1.0, 4.0]), q=np.zeros(2), r=-0.5),),
                       G=np.array([[0.0, -1.0]]), h=np.array([0.0]))
    cold = solve(spec)
    warm = solve(spec, z0=np.array([0.1, 0.1]))
    np.testing.assert_allclose(cold.z, warm.z, atol=1e-6)


def test_dump_format():
    text = dump_program(qp_example())
    lines = text.splitlines()
    assert lines[0] == "n 2 nx 2"
    assert lines[1] == "objective quadratic"
    assert lines[2:4] == ["P 1.0 0.0", "P 0.0 1.0"]
    assert lines[4] == "c -3.0 0.0"
    assert lines[5] == "le 1.0 0.0 <= 1.0"
