"""Two-domain planar walkers (torso + two legs hinged at the hip) under
virtual-constraint control, and hybrid-zero-dynamics gait design.

Coordinates are q = [x, z, pitch, q_a, q_b]: planar base at the hip, relative
hip angles for legs a and b. Domain 0 has leg a in stance, domain 1 leg b.
In each domain the controlled outputs are

    y2 = [pitch - b_0(s),  (pitch + q_swing) - b_1(s)]

with s the horizontal progress of the hip over the stance foot, normalized to
[0, 1] over one step. The step ends when the swing foot descends through the
ground (armed past mid-step); the impact is plastic and the legs swap roles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .config import dump_document, load_document
from .contact import ContactPoint, ContactSet, accel_map, impact_map
from .errors import ConfigError, ContractViolation, NonConvergence
from .hybrid import Guard, HybridGraph, HybridSystem, SimOptions, simulate
from .multibody import AgentState, MultibodyModel, load_model, point_kinematics
from .vc_control import (
    Bezier,
    LinearizationData,
    OutputDefinition,
    PdGains,
    PointPhase,
    baseline_control,
    linearization,
    output_values,
)

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
IX, IZ, IP = 0, 1, 2
LEG_Q = (3, 4)
ARM_PHASE = 0.6

WALKER_GRAPH = HybridGraph.cycle((0, 1))


@dataclass(frozen=True)
class Gait:
    """Symmetric gait shared by both domains (legs swap roles)."""

    alpha: np.ndarray  # (2, M + 1): rows pitch, swing-leg absolute angle
    phase_start: float  # x_hip - x_foot at s = 0
    phase_end: float  # x_hip - x_foot at s = 1
    gains: PdGains = PdGains()
    # nominal orbit data, filled by the design stage
    period: float = 0.0  # two-step cycle duration
    speed: float = 0.0
    fixed_point: np.ndarray | None = None  # post-impact full state, domain 0, stance foot at x = 0
    name: str = "gait"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_2d(np.asarray(self.alpha, dtype=float)))
        if self.fixed_point is not None:
            object.__setattr__(self, "fixed_point", np.asarray(self.fixed_point, dtype=float))

    @property
    def bezier(self) -> Bezier:
        return Bezier(self.alpha)

    @property
    def step_length(self) -> float:
        return self.phase_end - self.phase_start


@dataclass(frozen=True)
class Walker:
    model: MultibodyModel
    gait: Gait
    foot_names: tuple[str, str] = ("foot_a", "foot_b")
    fall_height: float = 0.4  # fraction of leg length
    defs: tuple = field(init=False, repr=False)
    contacts: tuple = field(init=False, repr=False)

    def __post_init__(self):
        m = self.model
        if m.n_dof != 5 or m.n_inputs != 2:
            raise ContractViolation("walker models need 5 DOF and 2 actuated hips")
        contacts = tuple(ContactSet((ContactPoint(m.point(f)),)) for f in self.foot_names)
        defs = []
        for dom in (0, 1):
            sw = LEG_Q[1 - dom]
            c2 = np.zeros((2, 5))
            c2[0, IP] = 1.0
            c2[1, IP] = 1.0
            c2[1, sw] = 1.0
            phase = PointPhase(m.point(self.foot_names[dom]), IX, self.gait.phase_start, self.gait.phase_end)
            defs.append(OutputDefinition(phase=phase, C2=c2, bezier=self.gait.bezier))
        object.__setattr__(self, "defs", tuple(defs))
        object.__setattr__(self, "contacts", contacts)

    # --------------------------------------------------------------- geometry
    @property
    def leg_length(self) -> float:
        return float(-self.model.point(self.foot_names[0]).offset[1])

    def stance_point(self, dom):
        return self.model.point(self.foot_names[dom])

    def swing_point(self, dom):
        return self.model.point(self.foot_names[1 - dom])

    def foot(self, dom_leg: int, q, qd=None):
        qd = np.zeros(5) if qd is None else qd
        return point_kinematics(self.model, q, qd, self.model.point(self.foot_names[dom_leg]))

    def swing_height(self, dom, q) -> float:
        return float(self.foot(1 - dom, q)[0][1])

    def phase(self, dom, q, qd=None) -> float:
        qd = np.zeros(5) if qd is None else qd
        return self.defs[dom].phase.evaluate(self.model, 0.0, q, qd).s

    def with_gait(self, gait: Gait) -> "Walker":
        return Walker(self.model, gait, self.foot_names, self.fall_height)

    # --------------------------------------------------------------- control
    def fast_terms(self, dom, q, qd) -> "WalkerTerms":
        """Compiled evaluation of the stance dynamics map and outputs."""
        m = self.model
        pk = m.packed
        st = self.stance_point(dom)
        g = self.gait
        gx, gz = m.gravity_vector
        r = _kernels.walker_terms(
            pk.jtype, pk.parent, pk.qstart, pk.origin, pk.axis, pk.mass, pk.com, pk.inertia,
            float(gx), float(gz), q, qd, st.link, float(st.offset[0]), float(st.offset[1]),
            self.defs[dom].C2, g.alpha, float(g.phase_start), float(g.phase_end), IX,
        )
        return WalkerTerms(*r)

    def fast_terms_point(self, dom, q, qd, pt):
        """fast_terms plus (position, Jacobian, velocity) of the sagittal body point pt."""
        m = self.model
        pk = m.packed
        st = self.stance_point(dom)
        g = self.gait
        gx, gz = m.gravity_vector
        r = _kernels.walker_terms_point(
            pk.jtype, pk.parent, pk.qstart, pk.origin, pk.axis, pk.mass, pk.com, pk.inertia,
            float(gx), float(gz), q, qd, st.link, float(st.offset[0]), float(st.offset[1]),
            self.defs[dom].C2, g.alpha, float(g.phase_start), float(g.phase_end), IX,
            pt.link, float(pt.offset[0]), float(pt.offset[1]),
        )
        return WalkerTerms(*r[:9]), r[9], r[10], r[11]

    def control_terms(self, dom, t, state: AgentState, force_map=None):
        """(accel map, linearization, output values) at the given state."""
        am = accel_map(self.model, self.contacts[dom], state)
        lin = linearization(self.model, self.contacts[dom], self.defs[dom], state, force_map, t, amap=am)
        vals = output_values(self.model, self.defs[dom], state, t)
        return am, lin, vals

    def baseline(self, dom, t, state, force_map=None, F=None):
        am, lin, vals = self.control_terms(dom, t, state, force_map)
        return baseline_control(lin, vals, self.gait.gains, F), am, lin, vals

    def accel(self, dom, t, state, u, force_map=None, F=None, am=None):
        am = accel_map(self.model, self.contacts[dom], state) if am is None else am
        tau = self.model.B @ u
        if force_map is not None and F is not None:
            tau = tau + force_map @ F
        return am.qddot(tau), am.lam(tau)

    def closed_loop(self, dom, t, x, force_map=None, F=None):
        n = self.model.n_dof
        q, qd = x[:n], x[n:]
        wt = self.fast_terms(dom, q, qd)
        tau_F = None if force_map is None or F is None else force_map @ F
        u = wt.baseline(self.model.B, self.gait.gains, tau_F)
        tau = self.model.B @ u
        if tau_F is not None:
            tau = tau + tau_F
        return np.concatenate([qd, wt.drift + wt.K @ tau])

    # --------------------------------------------------------------- events
    def impact(self, dom, x) -> tuple[int, np.ndarray]:
        st = AgentState.from_x(x)
        new = 1 - dom
        res = impact_map(self.model, self.contacts[new], st)
        return new, np.concatenate([st.q, res.qdot_plus])

    def fallen(self, x) -> str | None:
        if x[IZ] < self.fall_height * self.leg_length:
            return f"{self.model.name} fell (hip height {x[IZ]:.3f} m)"
        return None

    # --------------------------------------------------------------- HZD geometry
    def hzd_configuration(self, s: float, foot_x: float = 0.0, dom: int = 0) -> np.ndarray:
        """Configuration on the zero-dynamics manifold at phase s (outputs zero)."""
        g = self.gait
        L = self.leg_length
        b = g.bezier(s)
        d = g.phase_start + s * g.step_length  # x_hip - x_foot
        th_st = -math.asin(d / L)
        q = np.zeros(5)
        q[IX] = foot_x + d
        q[IZ] = L * math.cos(th_st)
        q[IP] = b[0]
        q[LEG_Q[dom]] = th_st - b[0]
        q[LEG_Q[1 - dom]] = b[1] - b[0]
        return q

    def hzd_velocity(self, s: float, sdot: float, dom: int = 0) -> np.ndarray:
        g = self.gait
        L = self.leg_length
        b, b1 = g.bezier(s), g.bezier.d1(s)
        d = g.phase_start + s * g.step_length
        th_st = -math.asin(d / L)
        dth_st = -g.step_length / (L * math.cos(th_st))
        v = np.zeros(5)
        v[IX] = g.step_length
        v[IZ] = -L * math.sin(th_st) * dth_st
        v[IP] = b1[0]
        v[LEG_Q[dom]] = dth_st - b1[0]
        v[LEG_Q[1 - dom]] = b1[1] - b1[0]
        return v * sdot

    def hzd_state(self, s, sdot, foot_x=0.0, dom=0) -> np.ndarray:
        return np.concatenate([self.hzd_configuration(s, foot_x, dom), self.hzd_velocity(s, sdot, dom)])

    # --------------------------------------------------------------- section chart
    def chart(self, x) -> np.ndarray:
        """Section coordinates of a post-impact domain-0 state:
        (pitch, q_a, pitchdot, qdot_a, qdot_b). Position x, height, swing
        angle and base velocity follow from the contacts."""
        return np.array([x[IP], x[LEG_Q[0]], x[5 + IP], x[5 + LEG_Q[0]], x[5 + LEG_Q[1]]])

    def unchart(self, c, foot_x: float = 0.0) -> np.ndarray:
        """Full domain-0 state with both feet on the ground, stance foot a at foot_x."""
        pitch, qa, pd, qda, qdb = (float(v) for v in c)
        L = self.leg_length
        th_a = pitch + qa
        th_b = -th_a  # both feet on flat ground with equal legs
        q = np.array([foot_x - L * math.sin(th_a), L * math.cos(th_a), pitch, qa, th_b - pitch])
        wa = pd + qda
        qd = np.array([-L * math.cos(th_a) * wa, -L * math.sin(th_a) * wa, pd, qda, qdb])
        return np.concatenate([q, qd])


@dataclass(frozen=True)
class WalkerTerms:
    drift: np.ndarray
    K: np.ndarray
    lam_drift: np.ndarray
    L: np.ndarray
    Phi: np.ndarray
    zeta: np.ndarray
    y2: np.ndarray
    y2dot: np.ndarray
    s: float

    def decoupling(self, B):
        return self.Phi @ self.K @ B

    def drift_out(self, tau_F=None):
        b = self.Phi @ self.drift + self.zeta
        if tau_F is not None:
            b = b + self.Phi @ (self.K @ tau_F)
        return b

    def feedback(self, gains: PdGains):
        return np.asarray(gains.kd) * self.y2dot + np.asarray(gains.kp) * self.y2

    def baseline(self, B, gains: PdGains, tau_F=None):
        """u = -A^-1 (b + l) for the square two-output walker."""
        return -np.linalg.solve(self.decoupling(B), self.drift_out(tau_F) + self.feedback(gains))


class WalkerSystem(HybridSystem):
    """Single walker with an optional constant sagittal workspace force at a body point."""

    def __init__(self, walker: Walker, force_point: str | None = None, force=None):
        self.w = walker
        self.force_point = force_point
        self.force = None if force is None else np.asarray(force, dtype=float)

    def _force_map(self, x):
        if self.force is None:
            return None
        st = AgentState.from_x(x)
        _, J, _, _ = point_kinematics(self.w.model, st.q, st.qdot, self.w.model.point(self.force_point))
        return J.T

    def flow(self, mode, t, x, hold):
        return self.w.closed_loop(mode, t, x, self._force_map(x), self.force)

    def guards(self, mode):
        w = self.w
        n = w.model.n_dof
        return (
            Guard(
                name=f"touchdown{mode}",
                fn=lambda t, x, d=mode: w.swing_height(d, x[:n]),
                fire=lambda m, t, x: (*w.impact(m, x), (m, 1 - m)),
                armed=lambda t, x, d=mode: w.phase(d, x[:n]) > ARM_PHASE,
            ),
        )

    def check(self, mode, t, x):
        return self.w.fallen(x)


# --------------------------------------------------------------------- IO

GAIT_SCHEMA_VERSION = 1


def gait_to_dict(g: Gait) -> dict:
    doc = {
        "version": GAIT_SCHEMA_VERSION,
        "name": g.name,
        "phase": {"type": "hip_over_stance_foot", "start": g.phase_start, "end": g.phase_end},
        "outputs": ["pitch", "swing_leg_absolute_angle"],
        "bezier": g.alpha.tolist(),
        "gains": {"kp": float(g.gains.kp), "kd": float(g.gains.kd)},
        "nominal": {"period": g.period, "speed": g.speed},
    }
    if g.fixed_point is not None:
        doc["nominal"]["fixed_point"] = g.fixed_point.tolist()
    return doc


def gait_from_dict(doc: dict, source=None) -> Gait:
    if doc.get("version") != GAIT_SCHEMA_VERSION:
        raise ConfigError(f"unsupported gait version {doc.get('version')!r}", source=source)
    try:
        nominal = doc.get("nominal", {}) or {}
        gains = doc.get("gains", {}) or {}
        return Gait(
            alpha=np.array(doc["bezier"], dtype=float),
            phase_start=float(doc["phase"]["start"]),
            phase_end=float(doc["phase"]["end"]),
            gains=PdGains(float(gains.get("kp", 25.0)), float(gains.get("kd", 10.0))),
            period=float(nominal.get("period", 0.0)),
            speed=float(nominal.get("speed", 0.0)),
            fixed_point=None if nominal.get("fixed_point") is None else np.array(nominal["fixed_point"]),
            name=str(doc.get("name", "gait")),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed gait document: {exc}", source=source) from None


def load_gait(path) -> Gait:
    return gait_from_dict(load_document(path), source=str(path))


def save_gait(g: Gait, path) -> None:
    Path(path).write_text(dump_document(gait_to_dict(g)), encoding="utf-8")


def load_walker(name: str) -> Walker:
    """Bundled walker ('dog' or 'human')."""
    return Walker(load_model(DATA_DIR / f"{name}.yaml"), load_gait(DATA_DIR / f"{name}_gait.yaml"))


def return_problem(walker: Walker, opts: SimOptions | None = None, t_budget: float | None = None):
    """Two-step return map on the post-impact section of domain 0."""
    from .poincare import ReturnProblem, SectionPart

    period = walker.gait.period or 1.0
    part = SectionPart(is_return=lambda ev: ev.mode_plus == 0, chart=walker.chart, crossings=1, name=walker.model.name)
    kw = {} if opts is None else {"opts": opts}
    return ReturnProblem(
        system=WalkerSystem(walker),
        unchart=lambda c: (0, walker.unchart(c)),
        parts=(part,),
        t_budget=t_budget if t_budget is not None else 3.0 * period,
        **kw,
    )
