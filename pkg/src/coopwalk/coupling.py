"""Leash interconnection between the dog head and the human hand.

Sagittal agent models are embedded in the ground plane through a planar track
(X, Y, psi): the base point sits at (X, Y), the agent faces heading psi, and a
body point with sagittal coordinates (x_p, z_p) is at

    (X + (x_p - x_b) cos psi,  Y + (x_p - x_b) sin psi,  z_p)

where x_b is the sagittal base coordinate. The track advances with
dX/dt = xdot_b cos psi, dY/dt = xdot_b sin psi.

Leash coordinates: b = p_head - p_hand in the ground plane, r = |b|,
theta = atan2(b_y, b_x) (zero when the hand trails directly behind the head
along +x) and z = z_hand - z_head. The force F acts on the hand, -F on the
head, and decomposes as F = F_r u_r + F_theta u_theta + F_z e_z with
u_r = -(cos theta, sin theta, 0) (pointing head -> hand) and
u_theta = (sin theta, -cos theta, 0) = d u_r / d theta, so that
F . d/dt(p_hand - p_head) = F_r rdot + F_theta r thetadot + F_z zdot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateGeometry
from .multibody import AgentState, MultibodyModel, PointSpec, point_kinematics

R_EPS = 1e-9


@dataclass(frozen=True)
class PlanarTrack:
    X: float = 0.0
    Y: float = 0.0
    psi: float = 0.0
    psidot: float = 0.0


@dataclass(frozen=True)
class AttachSpec:
    head: PointSpec
    hand: PointSpec


@dataclass(frozen=True)
class GroundPoint:
    p: np.ndarray  # (3,)
    J: np.ndarray  # (3, n) w.r.t. qdot
    v: np.ndarray  # (3,) including the heading-rate term
    a_bias: np.ndarray  # (3,) acceleration at qddot = 0 and constant heading rate
    lever: np.ndarray  # (3,) d p / d psi


@dataclass(frozen=True)
class LeashGeometry:
    r: float
    theta: float
    z: float
    rdot: float
    thetadot: float
    zdot: float
    J_head: np.ndarray  # (3, n_dog)
    J_hand: np.ndarray  # (3, n_human)
    p_head: np.ndarray
    p_hand: np.ndarray
    psi_dog: float = 0.0
    psi_human: float = 0.0

    @property
    def u_r(self) -> np.ndarray:
        return np.array([-math.cos(self.theta), -math.sin(self.theta), 0.0])

    @property
    def u_theta(self) -> np.ndarray:
        return np.array([math.sin(self.theta), -math.cos(self.theta), 0.0])

    @property
    def connecting_vector(self) -> np.ndarray:
        """(r, theta, z) rebuilt as p_hand - p_head."""
        return self.r * self.u_r + np.array([0.0, 0.0, self.z])


@dataclass(frozen=True)
class LeashForce:
    F: np.ndarray  # (3,) workspace force on the hand
    F_r: float
    F_theta: float
    F_z: float = 0.0

    @classmethod
    def from_components(cls, geometry: LeashGeometry, F_r, F_theta, F_z=0.0) -> "LeashForce":
        F = F_r * geometry.u_r + F_theta * geometry.u_theta + np.array([0.0, 0.0, F_z])
        return cls(F, float(F_r), float(F_theta), float(F_z))

    @classmethod
    def from_vector(cls, geometry: LeashGeometry, F) -> "LeashForce":
        F = np.asarray(F, dtype=float)
        return cls(F.copy(), float(F @ geometry.u_r), float(F @ geometry.u_theta), float(F[2]))

    @classmethod
    def zero(cls) -> "LeashForce":
        return cls(np.zeros(3), 0.0, 0.0, 0.0)


def _base_x_index(model: MultibodyModel) -> int:
    if model.joints[0].type not in ("planar", "planar-translation"):
        raise ContractViolation("ground embedding needs a planar base")
    return model.q_index[0][0]


def ground_point(model: MultibodyModel, state: AgentState, track: PlanarTrack, point: PointSpec) -> GroundPoint:
    pos, jac, vel, acc = point_kinematics(model, state.q, state.qdot, point)
    ib = _base_x_index(model)
    c, s = math.cos(track.psi), math.sin(track.psi)
    lever = pos[0] - state.q[ib]
    lever_dot = vel[0] - state.qdot[ib]
    p = np.array([track.X + lever * c, track.Y + lever * s, pos[1]])
    J = np.vstack([c * jac[0], s * jac[0], jac[1]])
    dpsi = np.array([-lever * s, lever * c, 0.0])
    w = track.psidot
    v = J @ state.qdot + dpsi * w
    # d/dt of (c xdot_p, s xdot_p, zdot_p) + d/dt(dpsi) w at qddot = 0, psiddot = 0
    a_bias = np.array(
        [
            c * acc[0] - s * w * vel[0] - (lever_dot * s + lever * c * w) * w,
            s * acc[0] + c * w * vel[0] + (lever_dot * c - lever * s * w) * w,
            acc[1],
        ]
    )
    return GroundPoint(p, J, v, a_bias, dpsi)


def leash_geometry(dog_model, dog_state, human_model, human_state, attach: AttachSpec,
                   dog_track=PlanarTrack(), human_track=PlanarTrack()) -> LeashGeometry:
    head = ground_point(dog_model, dog_state, dog_track, attach.head)
    hand = ground_point(human_model, human_state, human_track, attach.hand)
    return geometry_from_points(head, hand, dog_track.psi, human_track.psi)


def geometry_from_points(head: GroundPoint, hand: GroundPoint, psi_dog=0.0, psi_human=0.0) -> LeashGeometry:
    b = head.p[:2] - hand.p[:2]
    bd = head.v[:2] - hand.v[:2]
    r = math.hypot(b[0], b[1])
    if r < R_EPS:
        raise DegenerateGeometry(f"leash endpoints coincide in the ground plane (r = {r:.3e})")
    theta = math.atan2(b[1], b[0])
    rdot = float(b @ bd) / r
    thetadot = float(b[0] * bd[1] - b[1] * bd[0]) / (r * r)
    return LeashGeometry(
        r=r, theta=theta, z=float(hand.p[2] - head.p[2]), rdot=rdot, thetadot=thetadot,
        zdot=float(hand.v[2] - head.v[2]), J_head=head.J, J_hand=hand.J,
        p_head=head.p, p_hand=hand.p, psi_dog=psi_dog, psi_human=psi_human,
    )


def apply_coupling(geometry: LeashGeometry, force: LeashForce) -> tuple[np.ndarray, np.ndarray]:
    """Generalized forces (dog, human) = (-J_head^T F, +J_hand^T F)."""
    F = force.F
    return -geometry.J_head.T @ F, geometry.J_hand.T @ F


def lateral_forces(geometry: LeashGeometry, force: LeashForce) -> tuple[float, float]:
    """Ground-plane force components normal to each agent's heading (left positive)."""
    F = force.F
    nd = np.array([-math.sin(geometry.psi_dog), math.cos(geometry.psi_dog), 0.0])
    nh = np.array([-math.sin(geometry.psi_human), math.cos(geometry.psi_human), 0.0])
    return float(-F @ nd), float(F @ nh)


def leash_power(geometry: LeashGeometry, force: LeashForce) -> float:
    """Net power delivered to the two agents by the leash: F . d/dt(p_hand - p_head)."""
    return force.F_r * geometry.rdot + force.F_theta * geometry.r * geometry.thetadot + force.F_z * geometry.zdot
