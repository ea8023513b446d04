import math

import numpy as np
import pytest
import sympy as sp

from conftest import double_pendulum, pendulum, point_mass
from coopwalk.errors import ConfigError, ContractViolation
from coopwalk.hybrid import HybridSystem, SimOptions, simulate
from coopwalk.multibody import (
    AgentState, JointSpec, LinkSpec, MultibodyModel, PointSpec, bias_forces, dynamics_terms, forward_kinematics,
    jacobian_dot_qdot, kinetic_energy, load_model, mass_matrix, model_from_dict, point_jacobian, potential_energy,
)
from coopwalk.walker import DATA_DIR


# ----------------------------------------------------------------- symbolic oracle

def _double_pendulum_oracle(m1=1.0, m2=1.0, l1=1.0, l2=1.0, g=9.81):
    q1, q2, w1, w2 = sp.symbols("q1 q2 w1 w2")
    p1 = sp.Matrix([l1 * sp.sin(q1), -l1 * sp.cos(q1)])
    p2 = p1 + sp.Matrix([l2 * sp.sin(q1 + q2), -l2 * sp.cos(q1 + q2)])
    q = sp.Matrix([q1, q2])
    w = sp.Matrix([w1, w2])
    J1, J2 = p1.jacobian(q), p2.jacobian(q)
    D = sp.simplify(m1 * J1.T * J1 + m2 * J2.T * J2)
    V = m1 * g * p1[1] + m2 * g * p2[1]
    G = sp.Matrix([sp.diff(V, v) for v in q])
    # Coriolis via Christoffel symbols
    C = sp.zeros(2, 2)
    for k in range(2):
        for j in range(2):
            C[k, j] = sum(
                sp.Rational(1, 2) * (sp.diff(D[k, j], q[i]) + sp.diff(D[k, i], q[j]) - sp.diff(D[i, j], q[k])) * w[i]
                for i in range(2)
            )
    H = C * w + G
    args = (q1, q2, w1, w2)
    return sp.lambdify(args, D, "numpy"), sp.lambdify(args, H, "numpy"), sp.lambdify(args, J2, "numpy")


def test_point_mass_mass_matrix_is_diagonal():
    m = point_mass(2.0)
    assert np.allclose(mass_matrix(m, [0.3, -1.2]), np.diag([2.0, 2.0]), atol=0)


def test_pendulum_oracles():
    p = pendulum()
    for q in (0.0, 0.7, -2.0):
        assert mass_matrix(p, [q])[0, 0] == pytest.approx(1.0, rel=1e-12)
    assert bias_forces(p, [0.0], [0.0]) == pytest.approx([0.0], abs=1e-12)
    assert bias_forces(p, [math.pi / 2], [0.0]) == pytest.approx([9.81], rel=1e-12)


def test_gravity_free_rest_gives_zero_bias():
    p = double_pendulum(g=0.0)
    assert np.allclose(bias_forces(p, [0.4, -0.3], [0.0, 0.0]), 0.0, atol=1e-14)


def test_double_pendulum_at_q2_zero():
    D = mass_matrix(double_pendulum(), [0.3, 0.0])
    assert D[0, 0] == pytest.approx(5.0, rel=1e-12)
    assert D[0, 1] == pytest.approx(2.0, rel=1e-12)
    assert D[1, 0] == pytest.approx(2.0, rel=1e-12)
    assert D[1, 1] == pytest.approx(1.0, rel=1e-12)


def test_double_pendulum_matches_symbolic_lagrangian(rng):
    params = dict(m1=1.3, m2=0.7, l1=0.9, l2=1.1)
    model = double_pendulum(**params)
    Df, Hf, Jf = _double_pendulum_oracle(**params)
    for _ in range(25):
        q = rng.uniform(-math.pi, math.pi, 2)
        w = rng.uniform(-3, 3, 2)
        D, H = dynamics_terms(model, q, w)
        Do = np.array(Df(*q, *w), dtype=float)
        Ho = np.array(Hf(*q, *w), dtype=float).ravel()
        Jo = np.array(Jf(*q, *w), dtype=float)
        assert np.max(np.abs(D - Do)) <= 1e-9 * np.max(np.abs(Do))
        assert np.max(np.abs(H - Ho)) <= 1e-9 * max(1.0, np.max(np.abs(Ho)))
        J = point_jacobian(model, q, model.points["tip"])
        assert np.max(np.abs(J - Jo)) <= 1e-9 * np.max(np.abs(Jo))


# ----------------------------------------------------------------- jacobians

def test_base_point_jacobian_is_identity_block(human):
    model = human.model
    q = np.array([0.2, 0.9, 0.1, 0.3, -0.2])
    J = point_jacobian(model, q, PointSpec(0))
    assert np.allclose(J[:, :2], np.eye(2), atol=0)
    assert np.allclose(J[:, 3:], 0.0, atol=0)


def test_pendulum_tip_jacobian_and_centripetal_term():
    p = pendulum(l=1.0)
    J = point_jacobian(p, [0.0], p.points["tip"])
    assert J[:, 0] == pytest.approx([1.0, 0.0], abs=1e-14)
    # centripetal acceleration l qdot^2 toward the pivot (up at q = 0)
    assert jacobian_dot_qdot(p, [0.0], [2.0], p.points["tip"]) == pytest.approx([0.0, 4.0], abs=1e-12)


def test_prismatic_column_and_zero_bias():
    m = MultibodyModel(
        links=(LinkSpec("a", 1.0, (0.0, 0.0), 0.1), LinkSpec("b", 1.0, (0.0, 0.0), 0.1)),
        joints=(JointSpec("x", "prismatic", None, axis=(1.0, 0.0)),
                JointSpec("y", "prismatic", 0, axis=(0.0, 1.0), actuated=True)),
        gravity_vector=(0.0, -9.81),
        points={"tip": PointSpec(1)},
    )
    J = point_jacobian(m, [0.3, 0.2], m.points["tip"])
    assert J[:, 0] == pytest.approx([1.0, 0.0])
    assert np.allclose(jacobian_dot_qdot(m, [0.3, 0.2], [1.0, -2.0], m.points["tip"]), 0.0, atol=1e-14)


@pytest.mark.parametrize("name", ["dog", "human"])
def test_jacobians_match_finite_differences(name, rng, request):
    w = request.getfixturevalue(name)
    model = w.model
    for _ in range(10):
        q = rng.uniform(-0.6, 0.6, model.n_dof)
        qd = rng.uniform(-1.5, 1.5, model.n_dof)
        for pname, pt in model.points.items():
            J = point_jacobian(model, q, pt)
            h = 1e-6
            fd = np.column_stack([
                (forward_kinematics(model, q + h * e, pt) - forward_kinematics(model, q - h * e, pt)) / (2 * h)
                for e in np.eye(model.n_dof)
            ])
            assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J))), pname
            # (d/dt J) qdot along q(t) = q + t qdot
            dJ = (point_jacobian(model, q + h * qd, pt) - point_jacobian(model, q - h * qd, pt)) / (2 * h)
            assert np.allclose(jacobian_dot_qdot(model, q, qd, pt), dJ @ qd, atol=1e-6)


@pytest.mark.parametrize("name", ["dog", "human"])
def test_mass_matrix_spd_and_passivity(name, rng, request):
    model = request.getfixturevalue(name).model
    for _ in range(10):
        q = rng.uniform(-0.8, 0.8, model.n_dof)
        qd = rng.uniform(-2, 2, model.n_dof)
        D = mass_matrix(model, q)
        assert np.max(np.abs(D - D.T)) <= 1e-12 * np.max(np.abs(D))
        assert np.linalg.eigvalsh(D)[0] > 0
        # qd^T (Ddot - 2C) qd = 0  <=>  qd^T C qd = 1/2 qd^T Ddot qd
        h = 1e-6
        Ddot = (mass_matrix(model, q + h * qd) - mass_matrix(model, q - h * qd)) / (2 * h)
        G = bias_forces(model, q, np.zeros_like(qd))
        Cqd = bias_forces(model, q, qd) - G
        lhs = qd @ Ddot @ qd - 2 * qd @ Cqd
        assert abs(lhs) <= 1e-6 * max(1.0, abs(qd @ Ddot @ qd))


class _Free(HybridSystem):
    def __init__(self, model):
        self.model = model

    def flow(self, mode, t, x, hold):
        n = self.model.n_dof
        D, H = dynamics_terms(self.model, x[:n], x[n:])
        return np.concatenate([x[n:], np.linalg.solve(D, -H)])


@pytest.mark.parametrize("name", ["dog", "human", "double"])
def test_energy_is_conserved_over_one_second(name, request):
    model = double_pendulum() if name == "double" else request.getfixturevalue(name).model
    n = model.n_dof
    q0 = np.zeros(n)
    q0[-2:] = [0.4, -0.3]
    qd0 = np.zeros(n)
    qd0[-2:] = [1.0, -0.5]
    tr = simulate(_Free(model), 0, np.concatenate([q0, qd0]), 1.0, SimOptions(rtol=1e-11, atol=1e-12))

    def energy(x):
        return kinetic_energy(model, x[:n], x[n:]) + potential_energy(model, x[:n])

    E0 = energy(tr.segments[0].x[0])
    E1 = energy(tr.x_final)
    scale = max(abs(E0), kinetic_energy(model, q0, qd0))
    assert abs(E1 - E0) <= 1e-6 * scale


# ----------------------------------------------------------------- contracts

def test_dimension_mismatch_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        mass_matrix(pendulum(), [0.0, 1.0])
    with pytest.raises(ContractViolation):
        AgentState(np.zeros(2), np.zeros(3))
    with pytest.raises(ContractViolation):
        AgentState(np.array([np.nan]), np.zeros(1))


def test_model_invariants_are_enforced():
    with pytest.raises(ContractViolation):
        LinkSpec("bad", 0.0, (0, 0), 0.1)
    with pytest.raises(ContractViolation):
        JointSpec("j", "prismatic", None, axis=(1.0, 1.0))
    with pytest.raises(ContractViolation):
        JointSpec("j", "revolute", None, actuated=True)
    with pytest.raises(ContractViolation):
        MultibodyModel(
            links=(LinkSpec("a", 1, (0, 0), 0.1), LinkSpec("b", 1, (0, 0), 0.1)),
            joints=(JointSpec("a", "planar", None), JointSpec("b", "planar", None)),
            gravity_vector=(0, -9.81),
        )


def test_model_documents_roundtrip_and_errors():
    from coopwalk.config import load_document

    doc = load_document(DATA_DIR / "human.yaml")
    model = model_from_dict(doc)
    assert model.n_dof == 5 and model.n_inputs == 2
    assert load_model(DATA_DIR / "dog.yaml").name == "dog"
    bad = dict(doc)
    bad.pop("version")
    with pytest.raises(ConfigError):
        model_from_dict(bad)
    bad = dict(doc, links=[{"name": "x"}])
    with pytest.raises(ConfigError):
        model_from_dict(bad)
