import math

import numpy as np
import pytest

from conftest import double_pendulum
from coopwalk.contact import ContactSet
from coopwalk.errors import DecouplingSingular
from coopwalk.hybrid import HybridSystem, SimOptions, simulate
from coopwalk.multibody import AgentState, JointSpec, LinkSpec, MultibodyModel, PointSpec, dynamics_terms
from coopwalk.vc_control import (
    Bezier, ClockPhase, LinearPhase, OutputDefinition, PdGains, baseline_control, baseline_control_affine,
    linearization, output_values,
)

GAINS = PdGains(kp=25.0, kd=10.0)  # critically damped, double pole at -5
FREE = ContactSet()


def _elbow_output(period=2.0):
    """y = q2 - bezier(t / period) on the double pendulum (one actuated elbow)."""
    bz = Bezier(np.array([[0.0, 0.4, -0.3, 0.2]]))
    return OutputDefinition(phase=ClockPhase(period), C2=[[0.0, 1.0]], bezier=bz, s_range=(0.0, 10.0))


def test_bezier_derivatives(rng):
    bz = Bezier(rng.normal(size=(3, 6)))
    h = 1e-6
    for s in (0.1, 0.5, 0.93):
        assert np.allclose(bz.d1(s), (bz(s + h) - bz(s - h)) / (2 * h), atol=1e-7)
        assert np.allclose(bz.d2(s), (bz.d1(s + h) - bz.d1(s - h)) / (2 * h), atol=1e-6)
    assert np.allclose(bz(0.0), bz.coeffs[:, 0]) and np.allclose(bz(1.0), bz.coeffs[:, -1])


def test_linearization_matches_direct_oracle(rng):
    model = double_pendulum()
    defn = _elbow_output()
    for _ in range(10):
        st = AgentState(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        t = rng.uniform(0, 1.5)
        lin = linearization(model, FREE, defn, st, t=t)
        D, H = dynamics_terms(model, st.q, st.qdot)
        Dinv = np.linalg.inv(D)
        s, sdot = t / 2.0, 0.5
        A = (Dinv @ model.B)[1:2]
        b0 = -(Dinv @ H)[1:2] - defn.bezier.d2(s) * sdot**2
        assert np.allclose(lin.A, A, rtol=1e-10, atol=1e-12)
        assert np.allclose(lin.b0, b0, rtol=1e-10, atol=1e-10)


def test_baseline_imposes_pd_output_dynamics(rng):
    model = double_pendulum()
    defn = _elbow_output()
    for _ in range(5):
        st = AgentState(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        t = rng.uniform(0, 1.5)
        lin = linearization(model, FREE, defn, st, t=t)
        vals = output_values(model, defn, st, t)
        u = baseline_control(lin, vals, GAINS)
        y2dd = lin.A @ u + lin.b0
        assert np.allclose(y2dd, -GAINS.kd * vals.y2dot - GAINS.kp * vals.y2, atol=1e-9)


class _Tracking(HybridSystem):
    def __init__(self, model, defn):
        self.model, self.defn = model, defn

    def flow(self, mode, t, x, hold):
        st = AgentState(x[:2], x[2:])
        lin = linearization(self.model, FREE, self.defn, st, t=t)
        u = baseline_control(lin, output_values(self.model, self.defn, st, t), GAINS)
        D, H = dynamics_terms(self.model, st.q, st.qdot)
        return np.concatenate([st.qdot, np.linalg.solve(D, self.model.B @ u - H)])


def test_output_decays_at_the_pd_rate():
    model = double_pendulum()
    defn = _elbow_output()
    x0 = np.array([0.3, 0.5, 0.0, 0.0])
    y0 = 0.5 - defn.bezier(0.0)[0]
    y0d = 0.0 - defn.bezier.d1(0.0)[0] * 0.5
    opts = SimOptions(rtol=1e-10, atol=1e-12)
    ts = np.linspace(0.2, 2.0, 10)
    ys = []
    for t in ts:
        x = simulate(_Tracking(model, defn), 0, x0, t, opts).x_final
        ys.append(output_values(model, defn, AgentState(x[:2], x[2:]), t).y2[0])
    ys = np.array(ys)
    exact = (y0 + (5 * y0 + y0d) * ts) * np.exp(-5 * ts)
    assert np.allclose(ys, exact, atol=1e-7)
    # rate estimated from the envelope of the late-time solution
    lam = -np.polyfit(ts[3:], np.log(np.abs(ys[3:] / (y0 + (5 * y0 + y0d) * ts[3:]))), 1)[0]
    assert abs(lam - 5.0) <= 0.25 * 5.0


def test_affine_decomposition_in_the_force(rng):
    model = double_pendulum()
    defn = _elbow_output()
    E = rng.normal(size=(2, 3))
    st = AgentState(np.array([0.2, -0.4]), np.array([0.5, 0.1]))
    lin = linearization(model, FREE, defn, st, force_map=E, t=0.3)
    vals = output_values(model, defn, st, 0.3)
    u0, U1 = baseline_control_affine(lin, vals, GAINS)
    for _ in range(5):
        F = rng.normal(size=3)
        assert np.allclose(u0 + U1 @ F, baseline_control(lin, vals, GAINS, F), atol=1e-10)
        # a constant external force leaves the closed-loop output dynamics unchanged
        u = baseline_control(lin, vals, GAINS, F)
        assert np.allclose(lin.A @ u + lin.b(F), -GAINS.kd * vals.y2dot - GAINS.kp * vals.y2, atol=1e-9)


def _triple_pendulum():
    links = tuple(LinkSpec(f"l{i}", 1.0, (0.0, -1.0), 0.0, 1.0) for i in range(3))
    joints = (JointSpec("j0", "revolute", None), JointSpec("j1", "revolute", 0, (0.0, -1.0), actuated=True),
              JointSpec("j2", "revolute", 1, (0.0, -1.0), actuated=True))
    return MultibodyModel(links, joints, (0.0, -9.81), points={"tip": PointSpec(2, (0.0, -1.0))})


def test_over_actuated_uses_minimum_norm_input(rng):
    model = _triple_pendulum()
    defn = OutputDefinition(phase=LinearPhase(np.array([1.0, 0.0, 0.0]), 0.0, 1.0), C2=[[0.0, 1.0, 1.0]],
                            bezier=Bezier(np.array([[0.1, 0.2]])), s_range=(-5.0, 5.0))
    st = AgentState(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3))
    lin = linearization(model, FREE, defn, st)
    vals = output_values(model, defn, st)
    u = baseline_control(lin, vals, GAINS)
    target = -(lin.b0 + GAINS.kd * vals.y2dot + GAINS.kp * vals.y2)
    assert np.allclose(u, np.linalg.pinv(lin.A) @ target, atol=1e-10)


def test_singular_decoupling_raises():
    model = double_pendulum()
    # an output on a zero combination of coordinates cannot be steered
    defn = OutputDefinition(phase=ClockPhase(1.0), C2=[[0.0, 0.0]], bezier=Bezier(np.array([[0.0, 0.0]])))
    st = AgentState(np.zeros(2), np.zeros(2))
    lin = linearization(model, FREE, defn, st)
    with pytest.raises(DecouplingSingular):
        baseline_control(lin, output_values(model, defn, st), GAINS)


@pytest.mark.parametrize("name", ["dog", "human"])
def test_compiled_walker_terms_match_generic_path(name, request, rng):
    w = request.getfixturevalue(name)
    B = w.model.B
    for dom in (0, 1):
        x = w.gait.fixed_point.copy()
        x[5:] += rng.normal(scale=0.1, size=5)
        st = AgentState(x[:5], x[5:])
        u_ref, am, lin, vals = w.baseline(dom, 0.0, st)
        wt = w.fast_terms(dom, st.q, st.qdot)
        assert np.allclose(wt.baseline(B, w.gait.gains), u_ref, rtol=1e-8, atol=1e-8)
        xdot = w.closed_loop(dom, 0.0, x)
        assert np.allclose(xdot[5:], am.qddot(B @ u_ref), rtol=1e-8, atol=1e-8)
        assert lin.min_singular_value > 1e-3
        assert math.isfinite(vals.s)
