"""Holonomic contact constraints: constrained accelerations and plastic impacts."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ModelError, RankDeficientConstraint
from .multibody import AgentState, MultibodyModel, PointSpec, dynamics_terms, point_kinematics

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class ContactPoint:
    """Body point pinned along the listed workspace directions (0 = x, 1 = z)."""

    point: PointSpec
    directions: tuple[int, ...] = (0, 1)


@dataclass(frozen=True)
class ContactSet:
    constraints: tuple[ContactPoint, ...] = ()

    @property
    def k(self) -> int:
        return sum(len(c.directions) for c in self.constraints)

    def __bool__(self):
        return bool(self.constraints)


EMPTY = ContactSet()


@dataclass(frozen=True)
class ConstrainedDynamicsResult:
    qddot: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class ImpactResult:
    qdot_plus: np.ndarray
    delta_lambda: np.ndarray


def stacked_jacobian(model: MultibodyModel, contact: ContactSet, q, qdot=None):
    """(J_v, dJ_v qdot) stacked over all constrained directions."""
    n = model.n_dof
    qd = np.zeros(n) if qdot is None else qdot
    rows, bias = [], []
    for c in contact.constraints:
        _, jac, _, acc = point_kinematics(model, q, qd, c.point)
        for d in c.directions:
            rows.append(jac[d])
            bias.append(acc[d])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(rows), np.array(bias)


def check_rank(jac: np.ndarray) -> None:
    if jac.shape[0] == 0:
        return
    if jac.shape[0] > jac.shape[1]:
        raise RankDeficientConstraint(f"{jac.shape[0]} constraints exceed {jac.shape[1]} DOF")
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise RankDeficientConstraint(
            f"contact Jacobian rank deficient (sigma_min/sigma_max = {sv[-1] / sv[0]:.3e})"
        )


def _kkt_solve(d, jac, rhs_top, rhs_bottom):
    n, k = d.shape[0], jac.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = d
    kkt[:n, n:] = -jac.T
    kkt[n:, :n] = jac
    sol = np.linalg.solve(kkt, np.concatenate([rhs_top, rhs_bottom]))
    return sol[:n], sol[n:]


def constrained_accel(
    model: MultibodyModel, contact: ContactSet, state: AgentState, tau, *, terms=None
) -> ConstrainedDynamicsResult:
    """Solve D qdd + H = tau + J^T lam, J qdd + dJ qdot = 0.

    `tau` is the full generalized force (B u plus any coupling wrench).
    `terms` optionally passes a precomputed (D, H) pair.
    """
    q, qdot = state.q, state.qdot
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.n_dof,):
        raise ContractViolation(f"tau must have length {model.n_dof}")
    d, h = dynamics_terms(model, q, qdot) if terms is None else terms
    if not contact:
        try:
            return ConstrainedDynamicsResult(np.linalg.solve(d, tau - h), np.zeros(0))
        except np.linalg.LinAlgError:
            raise ModelError("singular mass matrix") from None
    jac, bias = stacked_jacobian(model, contact, q, qdot)
    check_rank(jac)
    qdd, lam = _kkt_solve(d, jac, tau - h, -bias)
    return ConstrainedDynamicsResult(qdd, lam)


def projected_accel(model, contact, state, tau):
    """Projector form qdd = D^-1 (proj (tau - H) - J^T X^-1 dJ qdot).

    Kept as an independent cross-check of constrained_accel.
    """
    d, h = dynamics_terms(model, state.q, state.qdot)
    jac, bias = stacked_jacobian(model, contact, state.q, state.qdot)
    dinv = np.linalg.inv(d)
    x = jac @ dinv @ jac.T
    xinv = np.linalg.inv(x)
    proj = np.eye(model.n_dof) - jac.T @ xinv @ jac @ dinv
    h_v = proj @ h + jac.T @ xinv @ bias
    return dinv @ (proj @ np.asarray(tau, dtype=float) - h_v)


def impact_map(model: MultibodyModel, new_contacts: ContactSet, state_minus: AgentState) -> ImpactResult:
    """Plastic impact: D (qd+ - qd-) = J^T dlam, J qd+ = 0, with q+ = q-."""
    qd_minus = state_minus.qdot
    if not new_contacts:
        return ImpactResult(qd_minus.copy(), np.zeros(0))
    q = state_minus.q
    d, _ = dynamics_terms(model, q, np.zeros_like(q))
    jac, _ = stacked_jacobian(model, new_contacts, q)
    check_rank(jac)
    qd_plus, dlam = _kkt_solve(d, jac, d @ qd_minus, np.zeros(jac.shape[0]))
    return ImpactResult(qd_plus, dlam)


def contact_forces_admissible(lam, contact: ContactSet, mu: float | None = None) -> bool:
    """Unilateral (normal >= 0) and optional friction-cone check, per contact point."""
    i = 0
    ok = True
    for c in contact.constraints:
        comp = dict(zip(c.directions, lam[i : i + len(c.directions)]))
        i += len(c.directions)
        normal = comp.get(1)
        if normal is not None and normal < 0:
            ok = False
        if mu is not None and normal is not None and 0 in comp and abs(comp[0]) > mu * max(normal, 0.0):
            ok = False
    return ok


@dataclass(frozen=True)
class AccelMap:
    """Constrained dynamics written as qdd = drift + K tau, lam = lam_drift + L tau."""

    drift: np.ndarray
    K: np.ndarray
    lam_drift: np.ndarray
    L: np.ndarray

    def qddot(self, tau) -> np.ndarray:
        return self.drift + self.K @ tau

    def lam(self, tau) -> np.ndarray:
        return self.lam_drift + self.L @ tau


def accel_map(model: MultibodyModel, contact: ContactSet, state: AgentState, *, terms=None) -> AccelMap:
    """Affine map from the generalized force to constrained accelerations and multipliers."""
    n = model.n_dof
    d, h = dynamics_terms(model, state.q, state.qdot) if terms is None else terms
    if not contact:
        try:
            dinv = np.linalg.inv(d)
        except np.linalg.LinAlgError:
            raise ModelError("singular mass matrix") from None
        return AccelMap(-dinv @ h, dinv, np.zeros(0), np.zeros((0, n)))
    jac, bias = stacked_jacobian(model, contact, state.q, state.qdot)
    check_rank(jac)
    k = jac.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = d
    kkt[:n, n:] = -jac.T
    kkt[n:, :n] = jac
    rhs = np.zeros((n + k, n + 1))
    rhs[:n, 0] = -h
    rhs[n:, 0] = -bias
    rhs[:n, 1:] = np.eye(n)
    sol = np.linalg.solve(kkt, rhs)
    return AccelMap(sol[:n, 0], sol[:n, 1:], sol[n:, 0], sol[n:, 1:])
