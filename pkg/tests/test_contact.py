import numpy as np
import pytest

from conftest import double_pendulum, pendulum, point_mass
from coopwalk.contact import (
    ContactPoint, ContactSet, accel_map, constrained_accel, contact_forces_admissible, impact_map, projected_accel,
    stacked_jacobian,
)
from coopwalk.errors import RankDeficientConstraint
from coopwalk.multibody import AgentState, PointSpec, dynamics_terms, kinetic_energy


def test_unconstrained_pendulum_at_rest():
    p = pendulum()
    res = constrained_accel(p, ContactSet(), AgentState(np.zeros(1), np.zeros(1)), np.zeros(1))
    assert res.qddot == pytest.approx([0.0], abs=1e-14)


def test_fully_pinned_point_mass():
    m = point_mass(2.0)
    pin = ContactSet((ContactPoint(PointSpec(0)),))
    tau = np.array([3.0, -7.0])
    res = constrained_accel(m, pin, AgentState(np.zeros(2), np.zeros(2)), tau)
    assert np.allclose(res.qddot, 0.0, atol=1e-12)
    # lambda cancels the applied force and gravity: tau + J^T lam = H
    _, H = dynamics_terms(m, np.zeros(2), np.zeros(2))
    assert np.allclose(tau + res.lam, H, atol=1e-12)


def test_double_pendulum_tip_pinned_kkt_oracle(rng):
    model = double_pendulum()
    pin = ContactSet((ContactPoint(model.points["tip"], (0,)),))
    for _ in range(10):
        st = AgentState(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        tau = rng.normal(size=2)
        res = constrained_accel(model, pin, st, tau)
        D, H = dynamics_terms(model, st.q, st.qdot)
        J, dJ = stacked_jacobian(model, pin, st.q, st.qdot)
        K = np.block([[D, -J.T], [J, np.zeros((1, 1))]])
        sol = np.linalg.lstsq(K, np.concatenate([tau - H, -dJ]), rcond=None)[0]
        assert np.allclose(res.qddot, sol[:2], rtol=1e-9, atol=1e-12)
        assert np.allclose(res.lam, sol[2:], rtol=1e-9, atol=1e-12)
        # equation residual and constraint acceleration
        assert np.max(np.abs(D @ res.qddot + H - tau - J.T @ res.lam)) <= 1e-8
        assert np.max(np.abs(J @ res.qddot + dJ)) <= 1e-8
        # projector form agrees
        assert np.allclose(projected_accel(model, pin, st, tau), res.qddot, rtol=1e-9, atol=1e-10)


def test_rank_deficient_contact_raises():
    model = double_pendulum()
    tip = model.points["tip"]
    twice = ContactSet((ContactPoint(tip, (0,)), ContactPoint(tip, (0,))))
    with pytest.raises(RankDeficientConstraint):
        constrained_accel(model, twice, AgentState(np.array([0.3, 0.2]), np.zeros(2)), np.zeros(2))


def test_point_mass_impact_oracle():
    m = point_mass(1.5)
    ground = ContactSet((ContactPoint(PointSpec(0), (1,)),))
    res = impact_map(m, ground, AgentState(np.zeros(2), np.array([0.4, -3.0])))
    assert res.qdot_plus == pytest.approx([0.4, 0.0], abs=1e-12)
    assert res.delta_lambda == pytest.approx([3.0 * 1.5], rel=1e-12)


def test_accel_map_is_affine_in_tau(human, rng):
    st = AgentState(human.gait.fixed_point[:5], human.gait.fixed_point[5:])
    am = accel_map(human.model, human.contacts[0], st)
    for _ in range(3):
        tau = rng.normal(size=5)
        res = constrained_accel(human.model, human.contacts[0], st, tau)
        assert np.allclose(am.qddot(tau), res.qddot, atol=1e-10)
        assert np.allclose(am.lam(tau), res.lam, atol=1e-9)


def test_unilateral_admissibility():
    c = ContactSet((ContactPoint(PointSpec(0)),))
    assert contact_forces_admissible(np.array([0.1, 5.0]), c)
    assert not contact_forces_admissible(np.array([0.1, -5.0]), c)
    assert not contact_forces_admissible(np.array([4.0, 5.0]), c, mu=0.5)


@pytest.mark.parametrize("name", ["dog", "human"])
def test_impact_properties_randomized(name, request, rng):
    """Post-impact constraint velocity vanishes and kinetic energy does not grow."""
    w = request.getfixturevalue(name)
    model = w.model
    worst_v, worst_dE = 0.0, -np.inf
    for _ in range(1000):
        q = np.zeros(5)
        q[2] = rng.uniform(-0.3, 0.3)
        q[3] = rng.uniform(-0.5, 0.5)
        q[4] = rng.uniform(-0.5, 0.5)
        q[1] = rng.uniform(0.5, 1.2)
        qd = rng.uniform(-2.0, 2.0, 5)
        for new in (0, 1):
            st = AgentState(q, qd)
            res = impact_map(model, w.contacts[new], st)
            J, _ = stacked_jacobian(model, w.contacts[new], q)
            worst_v = max(worst_v, float(np.max(np.abs(J @ res.qdot_plus))))
            dE = kinetic_energy(model, q, res.qdot_plus) - kinetic_energy(model, q, qd)
            worst_dE = max(worst_dE, dE)
    assert worst_v <= 1e-9
    assert worst_dE <= 1e-10
