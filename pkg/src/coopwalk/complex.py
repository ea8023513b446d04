"""The leashed dog-human complex: two walkers, a leash force, planar headings.

The complex state stacks, for the dog and then the human,

    [q (5), qdot (5), X, Y, psi]

where (X, Y) is the ground position of the agent's base and psi its heading
(the sagittal model walks along psi). Both agents are encoded as a single
hybrid system whose mode is the vertex pair (dog domain, human domain); the
guards of the two agents are listed dog first. Each agent's reset acts on its
own coordinates only, so simultaneous events commute.

Headings are kinematic. The lateral leash force steers each agent,

    psidot_d = -k_psi psi_d - k_Y Y_d + F_perp,d / (M_d v_d),
    psidot_h = -k_psi,h psi_h - k_Y,h Y_h + F_perp,h / (M_h v_h),

with v the reference speed of the agent's gait: a lateral force F_perp
produces the lateral acceleration F_perp / M of the base. The dog tracks its
nominal path Y = 0; the human gains default to zero (the human follows the
leash).

With a continuously evaluated leash law the heading rates enter the leash
rates through the lever arms of the attachment points, which makes the
(psidot, F) pair an algebraic loop. Both relations are affine, so the loop
is solved exactly. With a sampled (held) input the heading rates follow the
held force instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .coupling import AttachSpec, LeashForce, LeashGeometry, PlanarTrack
from .errors import ContractViolation
from .hybrid import Guard, HybridGraph, HybridSystem, SimOptions, strong_product
from .leash_control import LeashControllerParams
from .multibody import center_of_mass, forward_kinematics
from .walker import ARM_PHASE, IX, WALKER_GRAPH, Walker, WalkerTerms

NA = 13  # per-agent block
DOG, HUMAN = 0, 1
AGENT_NAMES = ("dog", "human")
GUARD_NAMES = ("dog_touchdown", "human_touchdown")


@dataclass(frozen=True)
class HeadingParams:
    k_psi: float = 3.0  # 1/s
    k_Y: float = 2.0  # 1/(m s)
    human_k_psi: float = 0.0  # the human follows the leash by default
    human_k_Y: float = 0.0

    def __post_init__(self):
        if min(self.k_psi, self.k_Y, self.human_k_psi, self.human_k_Y) < 0:
            raise ContractViolation("heading gains must be non-negative")


@dataclass(frozen=True)
class LeashedPair:
    dog: Walker
    human: Walker
    leash: LeashControllerParams = LeashControllerParams()
    heading: HeadingParams = HeadingParams()
    attach: AttachSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.attach is None:
            object.__setattr__(
                self, "attach", AttachSpec(self.dog.model.point("head"), self.human.model.point("hand"))
            )

    @property
    def walkers(self) -> tuple[Walker, Walker]:
        return self.dog, self.human

    def with_kappa(self, kappa: float) -> "LeashedPair":
        return replace(self, leash=self.leash.with_kappa(kappa))

    @property
    def graph(self) -> HybridGraph:
        return strong_product(WALKER_GRAPH, WALKER_GRAPH)

    def mass(self, agent: int) -> float:
        return self.walkers[agent].model.total_mass

    def v_ref(self, agent: int) -> float:
        v = self.walkers[agent].gait.speed
        return v if v > 0 else 1.0


# --------------------------------------------------------------------- layout


def block(x, agent: int) -> np.ndarray:
    return x[agent * NA:(agent + 1) * NA]


def agent_x(x, agent: int) -> np.ndarray:
    """Sagittal state (q, qdot) of one agent."""
    return x[agent * NA:agent * NA + 10]


def track_of(x, agent: int, psidot: float = 0.0) -> PlanarTrack:
    b = agent * NA
    return PlanarTrack(float(x[b + 10]), float(x[b + 11]), float(x[b + 12]), psidot)


def compose(dog_x, human_x, dog_pose=(0.0, 0.0, 0.0), human_pose=(0.0, 0.0, 0.0)) -> np.ndarray:
    return np.concatenate([np.asarray(dog_x, float), np.asarray(dog_pose, float),
                           np.asarray(human_x, float), np.asarray(human_pose, float)])


def place_pair(pair: LeashedPair, dog_x, human_x, r0: float, dog_pose=(0.0, 0.0, 0.0), y_offset: float = 0.0):
    """Complex state with the human trailing the dog along +X at leash length r0."""
    X_d, Y_d, psi_d = dog_pose
    if psi_d != 0.0:
        raise ContractViolation("place_pair aligns the agents along +X; rotate afterwards if needed")
    head = forward_kinematics(pair.dog.model, np.asarray(dog_x)[:5], pair.attach.head)[0] - dog_x[IX]
    hand = forward_kinematics(pair.human.model, np.asarray(human_x)[:5], pair.attach.hand)[0] - human_x[IX]
    dx = math.sqrt(max(r0 * r0 - y_offset * y_offset, 0.0))
    X_h = X_d + head - dx - hand
    return compose(dog_x, human_x, (X_d, Y_d, 0.0), (X_h, Y_d + y_offset, 0.0))


# --------------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class AgentTerms:
    walker: Walker
    dom: int
    q: np.ndarray
    qd: np.ndarray
    track: PlanarTrack
    terms: WalkerTerms
    p: np.ndarray  # ground position of the leash attachment (3,)
    J: np.ndarray  # (3, n) ground Jacobian of the attachment
    v: np.ndarray  # attachment velocity at psidot = 0
    lever: np.ndarray  # d p / d psi


@dataclass(frozen=True)
class ComplexEval:
    """Everything the complex vector field computes at one state."""

    agents: tuple[AgentTerms, AgentTerms]
    F: np.ndarray  # leash force on the hand
    F_baseline: np.ndarray  # leash baseline law at this state
    omega: np.ndarray  # heading rates (dog, human)
    u: tuple[np.ndarray, np.ndarray]
    tau_F: tuple[np.ndarray, np.ndarray]
    qdd: tuple[np.ndarray, np.ndarray]
    r: float
    theta: float
    rdot: float
    thetadot: float

    def xdot(self) -> np.ndarray:
        out = np.empty(2 * NA)
        for a, ag in enumerate(self.agents):
            lo = a * NA
            xb = ag.qd[IX]
            out[lo:lo + 5] = ag.qd
            out[lo + 5:lo + 10] = self.qdd[a]
            out[lo + 10] = xb * math.cos(ag.track.psi)
            out[lo + 11] = xb * math.sin(ag.track.psi)
            out[lo + 12] = self.omega[a]
        return out

    def geometry(self) -> LeashGeometry:
        d, h = self.agents
        return LeashGeometry(
            r=self.r, theta=self.theta, z=float(h.p[2] - d.p[2]), rdot=self.rdot, thetadot=self.thetadot,
            zdot=float((h.J @ h.qd)[2] - (d.J @ d.qd)[2]), J_head=d.J, J_hand=h.J,
            p_head=d.p, p_hand=h.p, psi_dog=d.track.psi, psi_human=h.track.psi,
        )

    @property
    def force(self) -> LeashForce:
        return LeashForce.from_vector(self.geometry(), self.F)


def agent_terms(pair: LeashedPair, mode, x) -> tuple[AgentTerms, AgentTerms]:
    pts = (pair.attach.head, pair.attach.hand)
    out = []
    for a, w in enumerate(pair.walkers):
        lo = a * NA
        q, qd = x[lo:lo + 5], x[lo + 5:lo + 10]
        tr = PlanarTrack(float(x[lo + 10]), float(x[lo + 11]), float(x[lo + 12]))
        terms, pos, jac, vel = w.fast_terms_point(mode[a], q, qd, pts[a])
        p, J, v, lever = _kernels.ground_embed(pos, jac, vel, q[IX], qd[IX], tr.X, tr.Y, tr.psi)
        out.append(AgentTerms(w, mode[a], q, qd, tr, terms, p, J, v, lever))
    return tuple(out)


def _leash_vectors(pair: LeashedPair):
    lp, hd = pair.leash, pair.heading
    lv = np.array([lp.r_min, lp.r_max, lp.kappa, lp.k_r, lp.d_r, lp.k_theta, lp.d_theta, lp.corner_width])
    hv = np.array([hd.k_psi, hd.k_Y, pair.mass(DOG) * pair.v_ref(DOG), pair.mass(HUMAN) * pair.v_ref(HUMAN),
                   hd.human_k_psi, hd.human_k_Y])
    return lv, hv


def heading_law(pair: LeashedPair, ags) -> tuple[np.ndarray, np.ndarray]:
    """omega = c0 + Bw F  (rows: dog, human)."""
    td, th = ags[DOG].track, ags[HUMAN].track
    nd = np.array([-math.sin(td.psi), math.cos(td.psi), 0.0])
    nh = np.array([-math.sin(th.psi), math.cos(th.psi), 0.0])
    hp = pair.heading
    c0 = np.array([-hp.k_psi * td.psi - hp.k_Y * td.Y, -hp.human_k_psi * th.psi - hp.human_k_Y * th.Y])
    Bw = np.vstack([-nd / (pair.mass(DOG) * pair.v_ref(DOG)), nh / (pair.mass(HUMAN) * pair.v_ref(HUMAN))])
    return c0, Bw


def coupling_forces(ags, F) -> tuple[np.ndarray, np.ndarray]:
    """(-J_head^T F, +J_hand^T F)."""
    return -ags[DOG].J.T @ F, ags[HUMAN].J.T @ F


_NO_HOLD = np.zeros(3)


def evaluate(pair: LeashedPair, mode, x, hold=None, ags=None) -> ComplexEval:
    """Closed-loop terms. `hold` = (u_dog, F) from a sampled controller, or None
    for the continuous baseline (dog virtual constraints + leash law)."""
    ags = agent_terms(pair, mode, x) if ags is None else ags
    lv, hv = _leash_vectors(pair)
    d, h = ags
    held = hold is not None
    F_in = np.asarray(hold[1], dtype=float) if held else _NO_HOLD
    omega, F, F_b, r, th, rdot, thdot = _kernels.leash_loop(
        lv, hv, d.p, d.v, d.lever, d.track.psi, d.track.Y, h.p, h.v, h.lever, h.track.psi, h.track.Y, held, F_in)
    tau = coupling_forces(ags, F)
    us, qdds = [], []
    for a, ag in enumerate(ags):
        B = ag.walker.model.B
        if a == DOG and held:
            u = np.asarray(hold[0], dtype=float)
        else:
            u = ag.terms.baseline(B, ag.walker.gait.gains, tau[a])
        us.append(u)
        qdds.append(ag.terms.drift + ag.terms.K @ (B @ u + tau[a]))
    return ComplexEval(ags, F, F_b, omega, tuple(us), tau, tuple(qdds), r, th, rdot, thdot)


# --------------------------------------------------------------------- affine maps for the safety layer


@dataclass(frozen=True)
class AffineAgent:
    """Base-point kinematics of one agent, affine in the decision z = [u_dog (2), F (3)]:

    xddot_b = a0 + a1 . z,   psidot = w0 + w1 . z.
    """

    X: float
    Y: float
    psi: float
    xdot_b: float
    a0: float
    a1: np.ndarray
    w0: float
    w1: np.ndarray


def affine_agents(pair: LeashedPair, mode, x, ags=None) -> tuple[AffineAgent, AffineAgent]:
    """Dog and human base accelerations / heading rates as affine maps of (u_dog, F),
    with the human torque replaced by its baseline law (affine in F)."""
    ags = agent_terms(pair, mode, x) if ags is None else ags
    c0, Bw = heading_law(pair, ags)
    out = []
    for a, ag in enumerate(ags):
        B = ag.walker.model.B
        t = ag.terms
        sign = -1.0 if a == DOG else 1.0
        JF = sign * ag.J.T  # tau_F = JF @ F
        a1 = np.zeros(5)
        if a == DOG:
            a0 = float(t.drift[IX])
            a1[:2] = (t.K @ B)[IX]
            a1[2:] = (t.K @ JF)[IX]
        else:
            A = t.decoupling(B)
            u0 = -np.linalg.solve(A, t.drift_out() + t.feedback(ag.walker.gait.gains))
            U1 = -np.linalg.solve(A, t.Phi @ t.K @ JF)
            a0 = float(t.drift[IX] + (t.K @ B @ u0)[IX])
            a1[2:] = (t.K @ (B @ U1 + JF))[IX]
        w1 = np.zeros(5)
        w1[2:] = Bw[a]
        out.append(AffineAgent(ag.track.X, ag.track.Y, ag.track.psi, float(ag.qd[IX]), a0, a1, float(c0[a]), w1))
    return tuple(out)


# --------------------------------------------------------------------- hybrid system


class ComplexSystem(HybridSystem):
    """Leashed complex as one hybrid system over the strong-product vertices.

    With `controller` set, (u_dog, F) is held between control samples
    (`SimOptions.sample_period`); `controller(pair, mode, t, x, hold)` returns the
    new hold. Without it the baseline laws act continuously.
    """

    def __init__(self, pair: LeashedPair, controller=None):
        self.pair = pair
        self.controller = controller
        graph = pair.graph
        self.edges = graph.edges

    def flow(self, mode, t, x, hold):
        return evaluate(self.pair, mode, x, hold if self.controller is not None else None).xdot()

    def sample(self, mode, t, x, hold):
        if self.controller is None:
            return hold
        return self.controller(self.pair, mode, t, x, hold)

    def guards(self, mode):
        out = []
        for a, w in enumerate(self.pair.walkers):
            lo = a * NA
            dom = mode[a]
            out.append(Guard(
                name=GUARD_NAMES[a],
                fn=lambda t, x, w=w, d=dom, lo=lo: w.swing_height(d, x[lo:lo + 5]),
                fire=lambda m, t, x, a=a: _fire(self.pair, a, m, x),
                armed=lambda t, x, w=w, d=dom, lo=lo: w.phase(d, x[lo:lo + 5]) > ARM_PHASE,
            ))
        return tuple(out)

    def check(self, mode, t, x):
        for a, w in enumerate(self.pair.walkers):
            cause = w.fallen(agent_x(x, a))
            if cause:
                return cause
        return None


def _fire(pair: LeashedPair, agent: int, mode, x):
    w = pair.walkers[agent]
    lo = agent * NA
    new_dom, xa = w.impact(mode[agent], x[lo:lo + 10])
    x = np.array(x, dtype=float)
    x[lo:lo + 10] = xa
    new_mode = tuple(new_dom if i == agent else m for i, m in enumerate(mode))
    return new_mode, x, (tuple(mode), new_mode)


def validate_events(system: ComplexSystem, events) -> list:
    """Events whose edge is not an edge of the strong product (empty when valid)."""
    return [ev for ev in events if ev.edge not in system.edges]


def apply_resets(pair: LeashedPair, mode, x, order=(DOG, HUMAN)):
    """Apply both agents' impact maps in the given order (for commutation checks)."""
    for a in order:
        mode, x, _ = _fire(pair, a, mode, x)
    return mode, x


# --------------------------------------------------------------------- ground traces


def ground_com(pair: LeashedPair, x) -> np.ndarray:
    """(2, 2): ground-plane COM of dog and human."""
    out = np.zeros((2, 2))
    for a, w in enumerate(pair.walkers):
        xa = agent_x(x, a)
        com = center_of_mass(w.model, xa[:5])
        tr = track_of(x, a)
        lever = com[0] - xa[IX]
        out[a] = (tr.X + lever * math.cos(tr.psi), tr.Y + lever * math.sin(tr.psi))
    return out


# --------------------------------------------------------------------- synchronous section


def complex_return_problem(pair: LeashedPair, r0: float | None = None, n_cycles=(1, 1),
                           opts: SimOptions | None = None, t_budget: float | None = None):
    """Return problem of the complex on the synchronous section.

    A section point is the pair of agent charts (dog, then human); both agents
    start on their own post-impact sections at the same instant with the human
    trailing at leash length r0 along +X. The map output is each agent's chart
    at its own N-th return to its section (N^d, N^h = n_cycles, so that
    N^d T^d = N^h T^h). The ground pose (X, Y, psi) is re-anchored at every
    application; at kappa = 0 the map is the product of the agents' return maps.
    """
    from .poincare import ReturnProblem, SectionPart

    lp = pair.leash
    r0 = lp.r_max if r0 is None else r0

    def unchart(c):
        c = np.asarray(c, dtype=float)
        xd = pair.dog.unchart(c[:5])
        xh = pair.human.unchart(c[5:])
        return (0, 0), place_pair(pair, xd, xh, r0, (xd[IX], 0.0, 0.0))

    parts = tuple(
        SectionPart(
            is_return=lambda ev, a=a: ev.guard == GUARD_NAMES[a] and ev.mode_plus[a] == 0,
            chart=lambda xp, a=a: pair.walkers[a].chart(agent_x(xp, a)),
            crossings=int(n_cycles[a]),
            name=AGENT_NAMES[a],
        )
        for a in (DOG, HUMAN)
    )
    periods = [w.gait.period or 1.0 for w in pair.walkers]
    budget = t_budget if t_budget is not None else 1.5 * max(n * T for n, T in zip(n_cycles, periods)) + 0.5
    kw = {} if opts is None else {"opts": opts}
    return ReturnProblem(system=ComplexSystem(pair), unchart=unchart, parts=parts, t_budget=budget, **kw)


def section_guess(pair: LeashedPair) -> np.ndarray:
    """Stacked agent fixed points (in chart coordinates) from the stored gaits."""
    out = []
    for w in pair.walkers:
        if w.gait.fixed_point is None:
            raise ContractViolation(f"gait {w.gait.name} has no stored fixed point")
        out.append(w.chart(w.gait.fixed_point))
    return np.concatenate(out)


def agent_state_labels() -> list:
    names = ["x", "z", "pitch", "q_a", "q_b"]
    out = []
    for ag in AGENT_NAMES:
        out += [f"{ag}_{n}" for n in names] + [f"{ag}_{n}dot" for n in names] + [f"{ag}_X", f"{ag}_Y", f"{ag}_psi"]
    return out

