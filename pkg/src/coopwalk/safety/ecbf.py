"""Exponential control barrier functions for point obstacles in the ground plane.

For a critical point P of an agent and an obstacle r_o,

    h = |P - r_o|^2 - h_min^2,   hdot = 2 (P - r_o) . Pdot,
    hddot = 2 |Pdot|^2 + 2 (P - r_o) . Pddot.

Critical points are base origins (the hips): their ground position is the
agent's track point (X, Y), so Pdot = xdot_b (cos psi, sin psi) and

    Pddot = xddot_b (cos psi, sin psi) + xdot_b psidot (-sin psi, cos psi).

Both xddot_b and psidot are affine in the decision z = [u_dog, F]; the human
torque is its baseline law, itself affine in F. The ECBF condition with poles
(pole_lambda, pole_omega),

    hddot + (pole_lambda + pole_omega) hdot + pole_lambda pole_omega h >= 0,

is one affine row  a . z + c >= 0  per (point, obstacle) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..complex import AGENT_NAMES, DOG, HUMAN, LeashedPair, affine_agents, track_of
from ..errors import ContractViolation
from ..walker import IX

N_DECISION = 5  # u_dog (2) + F (3)


@dataclass(frozen=True)
class ObstacleField:
    obstacles: np.ndarray  # (k, 2) ground-plane points
    h_min: float = 0.3

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(obs)):
            raise ContractViolation("obstacle coordinates must be finite")
        object.__setattr__(self, "obstacles", obs)
        if not self.h_min > 0:
            raise ContractViolation("h_min must be positive")

    def __len__(self):
        return self.obstacles.shape[0]


@dataclass(frozen=True)
class CriticalPoints:
    dog_points: tuple[str, ...] = ("hip",)
    human_points: tuple[str, ...] = ("hip",)

    def __post_init__(self):
        if not self.dog_points and not self.human_points:
            raise ContractViolation("need at least one critical point")

    def validate(self, pair: LeashedPair) -> None:
        for w, names in ((pair.dog, self.dog_points), (pair.human, self.human_points)):
            for name in names:
                p = w.model.point(name)
                if p.link != 0 or np.any(np.asarray(p.offset) != 0.0):
                    raise ContractViolation(
                        f"critical point {name!r} of {w.model.name} must be the base origin "
                        "(off-base points make the heading term non-affine)"
                    )

    def agents(self) -> list[tuple[int, str]]:
        return [(DOG, n) for n in self.dog_points] + [(HUMAN, n) for n in self.human_points]


@dataclass(frozen=True)
class EcbfParams:
    pole_lambda: float = 5.0
    pole_omega: float = 5.0

    def __post_init__(self):
        if not (self.pole_lambda > 0 and self.pole_omega > 0):
            raise ContractViolation("ECBF poles must be positive")


@dataclass(frozen=True)
class BarrierValue:
    agent: str
    point: str
    obstacle: int
    h: float
    hdot: float


def _base_kinematics(x, agent):
    tr = track_of(x, agent)
    xb = float(x[agent * 13 + 5 + IX])
    c, s = math.cos(tr.psi), math.sin(tr.psi)
    return np.array([tr.X, tr.Y]), xb * np.array([c, s]), c, s, xb


def barrier_values(field: ObstacleField, points: CriticalPoints, x) -> list[BarrierValue]:
    out = []
    for agent, name in points.agents():
        P, Pd, _, _, _ = _base_kinematics(x, agent)
        for k, ro in enumerate(field.obstacles):
            d = P - ro
            out.append(BarrierValue(AGENT_NAMES[agent], name, k, float(d @ d - field.h_min**2), float(2 * d @ Pd)))
    return out


def min_barrier(field: ObstacleField, points: CriticalPoints, x) -> float:
    if len(field) == 0:
        return math.inf
    return min(v.h for v in barrier_values(field, points, x))


@dataclass(frozen=True)
class EcbfRows:
    A: np.ndarray  # (k, 5)
    b: np.ndarray  # (k,)
    h: np.ndarray
    hdot: np.ndarray
    labels: tuple[str, ...]

    def values(self, z) -> np.ndarray:
        return self.A @ np.asarray(z, dtype=float) + self.b


def ecbf_rows(pair: LeashedPair, mode, x, field: ObstacleField, points: CriticalPoints, params: EcbfParams,
              affine=None) -> EcbfRows:
    """Rows a . [u_dog, F] + c >= 0 encoding the ECBF condition for every pair."""
    if len(field) == 0:
        z = np.zeros(0)
        return EcbfRows(np.zeros((0, N_DECISION)), z, z, z, ())
    aff = affine_agents(pair, mode, x) if affine is None else affine
    lam, om = params.pole_lambda, params.pole_omega
    rows, rhs, hs, hds, labels = [], [], [], [], []
    for agent, name in points.agents():
        ag = aff[agent]
        c, s = math.cos(ag.psi), math.sin(ag.psi)
        P = np.array([ag.X, ag.Y])
        t = np.array([c, s])
        nrm = np.array([-s, c])
        Pd = ag.xdot_b * t
        for k, ro in enumerate(field.obstacles):
            d = P - ro
            h = float(d @ d - field.h_min**2)
            hd = float(2 * d @ Pd)
            dt, dn = float(d @ t), float(d @ nrm)
            # hddot = 2|Pd|^2 + 2 [dt (a0 + a1 z) + dn xdot (w0 + w1 z)]
            row = 2.0 * (dt * ag.a1 + dn * ag.xdot_b * ag.w1)
            c0 = 2.0 * float(Pd @ Pd) + 2.0 * (dt * ag.a0 + dn * ag.xdot_b * ag.w0)
            rows.append(row)
            rhs.append(c0 + (lam + om) * hd + lam * om * h)
            hs.append(h)
            hds.append(hd)
            labels.append(f"{AGENT_NAMES[agent]}.{name}/obstacle{k}")
    return EcbfRows(np.array(rows), np.array(rhs), np.array(hs), np.array(hds), tuple(labels))
