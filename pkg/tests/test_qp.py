import numpy as np
import pytest

from oracles import constructed_qp, enumerate_qp, random_qp, stack_bounds
from coopwalk.errors import ContractViolation, QPInfeasible
from coopwalk.safety.qp import QPProblem, WarmStart, kkt_report, solve_qp


def _kkt_ok(rep, tol=1e-8):
    return max(rep.stationarity, rep.primal_infeasibility, rep.complementarity, rep.dual_infeasibility) <= tol


def test_one_dimensional_example():
    # min (z - 3)^2  s.t.  z <= 2
    res = solve_qp(QPProblem([[2.0]], [-6.0], [[-1.0]], [2.0]))
    assert res.z == pytest.approx([2.0], abs=1e-12)
    assert res.multipliers == pytest.approx([2.0], abs=1e-12)
    assert res.report.active == (0,)


def test_unconstrained_and_inactive_rows():
    res = solve_qp(QPProblem(np.eye(2), [1.0, -1.0], np.zeros((0, 2)), np.zeros(0)))
    assert res.z == pytest.approx([-1.0, 1.0])
    res = solve_qp(QPProblem(np.eye(2), [1.0, -1.0], [[1.0, 0.0]], [5.0]))
    assert res.z == pytest.approx([-1.0, 1.0]) and res.report.active == ()


def test_random_problems_match_enumeration(rng):
    for _ in range(60):
        H, g, A, b, _, _ = random_qp(rng, m_max=12)
        z_o, f_o = enumerate_qp(H, g, A, b)
        res = solve_qp(QPProblem(H, g, A, b))
        assert res.report.objective == pytest.approx(f_o, rel=1e-6, abs=1e-6)
        assert _kkt_ok(res.report)


def test_constructed_problems_with_many_rows(rng):
    for _ in range(40):
        H, g, A, b, z_star, S = constructed_qp(rng)
        z_o, f_o = enumerate_qp(H, g, A, b)
        assert np.allclose(z_o, z_star, atol=1e-8)
        res = solve_qp(QPProblem(H, g, A, b))
        assert np.allclose(res.z, z_star, atol=1e-7)
        assert res.report.objective == pytest.approx(f_o, rel=1e-6, abs=1e-6)
        assert _kkt_ok(res.report)


def test_box_bounds_match_enumeration(rng):
    for _ in range(30):
        H, g, A, b, lb, ub = random_qp(rng, n_max=6, m_max=6, bounds=True)
        As, bs = stack_bounds(A, b, lb, ub)
        _, f_o = enumerate_qp(H, g, As, bs)
        res = solve_qp(QPProblem(H, g, A, b, lb, ub))
        assert res.report.objective == pytest.approx(f_o, rel=1e-6, abs=1e-6)
        assert _kkt_ok(res.report)


def test_fixed_variables_are_eliminated(rng):
    H, g, A, b, lb, ub = random_qp(rng, n_max=6, m_max=8, bounds=True)
    n = H.shape[0]
    lb, ub = lb.copy(), ub.copy()
    lb[0] = ub[0] = 0.0
    res = solve_qp(QPProblem(H, g, A, b, lb, ub))
    assert res.z[0] == 0.0
    assert _kkt_ok(res.report)
    As, bs = stack_bounds(A, b, lb, ub)
    # the oracle solves the problem restricted to the free variables (z_0 = 0)
    _, f_o = enumerate_qp(H[1:, 1:], g[1:], As[:, 1:], bs)
    assert res.report.objective == pytest.approx(f_o, rel=1e-6, abs=1e-9)
    assert len(res.multipliers) == A.shape[0] + 2 * n


def test_warm_start_is_consistent(rng):
    H, g, A, b, _, _ = constructed_qp(rng)
    warm = WarmStart()
    r1 = solve_qp(QPProblem(H, g, A, b), warm)
    r2 = solve_qp(QPProblem(H, g, A, b), warm)
    assert np.allclose(r1.z, r2.z, atol=1e-12)
    assert r2.report.iterations <= r1.report.iterations
    r3 = solve_qp(QPProblem(H, g, A, b))
    assert np.array_equal(r1.z, r3.z)  # deterministic


def test_infeasible_problem_reports_the_worst_row():
    # z >= 1 and z <= -1
    with pytest.raises(QPInfeasible) as info:
        solve_qp(QPProblem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
    assert info.value.violation > 0


def test_contracts():
    with pytest.raises(ContractViolation):
        solve_qp(QPProblem([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(ContractViolation):
        QPProblem([[1.0]], [np.nan], np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(ContractViolation):
        QPProblem([[1.0]], [0.0], np.zeros((0, 1)), np.zeros(0), lb=[1.0], ub=[0.0])


def test_kkt_report_detects_a_wrong_point():
    p = QPProblem([[2.0]], [-6.0], [[-1.0]], [2.0])
    rep = kkt_report(p, np.array([2.5]), np.array([0.0]))
    assert rep.primal_infeasibility == pytest.approx(0.5)
    assert rep.stationarity == pytest.approx(1.0)
