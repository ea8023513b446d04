"""Planar tree-structure rigid-body dynamics.

Every link lives in the sagittal (x, z) plane. Link frames are chained from a
single base joint; angles are measured counter-clockwise, so rotating the
body vector (0, -L) by a positive angle moves its tip towards +x.

The equations of motion are assembled by projecting Newton-Euler terms through
the link COM Jacobians::

    D(q) = sum_i m_i Jc_i^T Jc_i + I_i Jw_i^T Jw_i
    H(q, qdot) = sum_i m_i Jc_i^T (dJc_i qdot - g)

which is the Lagrangian D(q) qddot + C(q, qdot) qdot + G(q) for tree chains.
"""

from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractViolation

JOINT_DOFS = {"planar": 3, "planar-translation": 2, "revolute": 1, "prismatic": 1}


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    com_offset: tuple[float, float]
    inertia: float
    length: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ContractViolation(f"link {self.name}: mass must be > 0")
        if self.inertia < 0 or self.length < 0:
            raise ContractViolation(f"link {self.name}: inertia and length must be >= 0")


@dataclass(frozen=True)
class JointSpec:
    name: str
    type: str
    parent_link: int | None
    origin: tuple[float, float] = (0.0, 0.0)
    axis: tuple[float, float] = (1.0, 0.0)
    actuated: bool = False

    def __post_init__(self):
        if self.type not in JOINT_DOFS:
            raise ContractViolation(f"joint {self.name}: unknown type {self.type!r}")
        if self.type == "prismatic" and abs(math.hypot(*self.axis) - 1.0) > 1e-12:
            raise ContractViolation(f"joint {self.name}: prismatic axis must be a unit vector")
        if self.actuated and self.parent_link is None:
            raise ContractViolation(f"joint {self.name}: base coordinates cannot be actuated")

    @cached_property
    def n_dof(self) -> int:
        return JOINT_DOFS[self.type]


@dataclass(frozen=True)
class PointSpec:
    """Body-fixed point: `offset` expressed in the frame of link `link`."""

    link: int
    offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class AgentState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qdot, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise ContractViolation("q and qdot must be 1-D with equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ContractViolation("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])

    @classmethod
    def from_x(cls, x) -> "AgentState":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True)
class MultibodyModel:
    """Joint i drives link i; joint 0 is the only base joint."""

    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    gravity_vector: tuple[float, float]
    name: str = "model"
    points: dict[str, PointSpec] = field(default_factory=dict)
    torque_limits: tuple[float, ...] | None = None
    # derived
    q_index: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    ancestry: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    packed: "_Packed" = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        links = tuple(self.links)
        joints = tuple(self.joints)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "joints", joints)
        if len(links) != len(joints) or not links:
            raise ContractViolation("need one joint per link and at least one link")
        bases = [j for j in joints if j.parent_link is None]
        if len(bases) != 1 or joints[0].parent_link is not None:
            raise ContractViolation("exactly one base joint is required and it must be joint 0")
        q_index = []
        ancestry = []
        start = 0
        for i, joint in enumerate(joints):
            if i > 0 and not (0 <= joint.parent_link < i):
                raise ContractViolation(
                    f"joint {joint.name}: parent must precede the child (tree ordering)"
                )
            q_index.append(tuple(range(start, start + joint.n_dof)))
            start += joint.n_dof
            chain = [i]
            while joints[chain[-1]].parent_link is not None:
                chain.append(joints[chain[-1]].parent_link)
            ancestry.append(tuple(reversed(chain)))
        object.__setattr__(self, "q_index", tuple(q_index))
        object.__setattr__(self, "ancestry", tuple(ancestry))
        object.__setattr__(self, "packed", _Packed.build(self))
        for name, p in self.points.items():
            if not 0 <= p.link < len(links):
                raise ContractViolation(f"point {name}: unknown link {p.link}")
        if self.torque_limits is not None and len(self.torque_limits) != self.n_inputs:
            raise ContractViolation("torque_limits needs one entry per actuated joint")
        self._check_composite_inertia()

    def _check_composite_inertia(self):
        d = mass_matrix(self, np.zeros(self.n_dof))
        if np.min(np.diag(d)) <= 0:
            raise ContractViolation("composite inertia about some joint axis is not positive")

    @cached_property
    def n_dof(self) -> int:
        return self.q_index[-1][-1] + 1

    @cached_property
    def actuated_joint_indices(self) -> tuple[int, ...]:
        return tuple(self.q_index[i][0] for i, j in enumerate(self.joints) if j.actuated)

    @cached_property
    def n_inputs(self) -> int:
        return len(self.actuated_joint_indices)

    @cached_property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    @cached_property
    def B(self) -> np.ndarray:
        b = np.zeros((self.n_dof, self.n_inputs))
        for k, i in enumerate(self.actuated_joint_indices):
            b[i, k] = 1.0
        b.setflags(write=False)
        return b

    def point(self, name: str) -> PointSpec:
        try:
            return self.points[name]
        except KeyError:
            raise ContractViolation(f"model {self.name} has no point {name!r}") from None


@dataclass(frozen=True)
class _Packed:
    """Array form of the model consumed by the compiled sweeps."""

    jtype: np.ndarray
    parent: np.ndarray
    qstart: np.ndarray
    origin: np.ndarray
    axis: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray

    @classmethod
    def build(cls, model) -> "_Packed":
        js, ls = model.joints, model.links
        return cls(
            jtype=np.array([_kernels.TYPE_CODES[j.type] for j in js], dtype=np.int64),
            parent=np.array([-1 if j.parent_link is None else j.parent_link for j in js], dtype=np.int64),
            qstart=np.array([ix[0] for ix in model.q_index], dtype=np.int64),
            origin=np.array([j.origin for j in js], dtype=float).reshape(-1, 2),
            axis=np.array([j.axis for j in js], dtype=float).reshape(-1, 2),
            mass=np.array([l.mass for l in ls], dtype=float),
            com=np.array([l.com_offset for l in ls], dtype=float).reshape(-1, 2),
            inertia=np.array([l.inertia for l in ls], dtype=float),
        )


def _check_q(model: MultibodyModel, q, qdot=None):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_dof,):
        raise ContractViolation(f"q has shape {q.shape}, expected ({model.n_dof},)")
    if not np.all(np.isfinite(q)):
        raise ContractViolation("q must be finite")
    if qdot is None:
        return q, None
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != (model.n_dof,):
        raise ContractViolation(f"qdot has shape {qdot.shape}, expected ({model.n_dof},)")
    if not np.all(np.isfinite(qdot)):
        raise ContractViolation("qdot must be finite")
    return q, qdot


class _Frames:
    """Per-link kinematic quantities for one (q, qdot) evaluation."""

    __slots__ = ("arrays", "phi", "jw", "n")

    def __init__(self, model: MultibodyModel, q, qdot):
        pk = model.packed
        qd = qdot if qdot is not None else np.zeros(model.n_dof)
        self.arrays = _kernels.frames(pk.jtype, pk.parent, pk.qstart, pk.origin, pk.axis, q, qd)
        self.phi = self.arrays[3]
        self.jw = self.arrays[6]
        self.n = model.n_dof

    def point(self, model: MultibodyModel, link: int, offset):
        """Position, Jacobian (2 x n), velocity and bias acceleration of a body point."""
        return _kernels.point(*self.arrays, link, float(offset[0]), float(offset[1]))


def forward_kinematics(model: MultibodyModel, q, point: PointSpec) -> np.ndarray:
    q, _ = _check_q(model, q)
    _check_point(model, point)
    fr = _Frames(model, q, None)
    pos, _, _, _ = fr.point(model, point.link, point.offset)
    return pos


def link_angle(model: MultibodyModel, q, link: int) -> float:
    q, _ = _check_q(model, q)
    return float(_Frames(model, q, None).phi[link])


def _check_point(model, point):
    if not isinstance(point, PointSpec) or not 0 <= point.link < len(model.links):
        raise ContractViolation(f"unknown link index in point reference {point!r}")


def mass_matrix(model: MultibodyModel, q) -> np.ndarray:
    """Symmetric positive definite D(q)."""
    if getattr(model, "q_index", None) is None:
        raise ContractViolation("model not initialised")
    q, _ = _check_q(model, q)
    d, _ = _assemble(model, q, None, want_bias=False)
    return d


def bias_forces(model: MultibodyModel, q, qdot) -> np.ndarray:
    """H = C(q, qdot) qdot + G(q)."""
    q, qdot = _check_q(model, q, qdot)
    _, h = _assemble(model, q, qdot, want_mass=False)
    return h


def gravity_forces(model: MultibodyModel, q) -> np.ndarray:
    q, _ = _check_q(model, q)
    _, h = _assemble(model, q, np.zeros(model.n_dof), want_mass=False)
    return h


def dynamics_terms(model: MultibodyModel, q, qdot) -> tuple[np.ndarray, np.ndarray]:
    """(D, H) in one kinematic sweep."""
    q, qdot = _check_q(model, q, qdot)
    return _assemble(model, q, qdot)


def _assemble(model, q, qdot, want_mass=True, want_bias=True):
    fr = _Frames(model, q, qdot)
    pk = model.packed
    gx, gz = model.gravity_vector
    d, h = _kernels.assemble(*fr.arrays, pk.mass, pk.com, pk.inertia, float(gx), float(gz))
    if want_mass:
        d = 0.5 * (d + d.T)
    return (d if want_mass else None), (h if want_bias else None)


def point_jacobian(model: MultibodyModel, q, point: PointSpec) -> np.ndarray:
    """2 x n Jacobian of a body-fixed point in the sagittal plane."""
    q, _ = _check_q(model, q)
    _check_point(model, point)
    _, jac, _, _ = _Frames(model, q, None).point(model, point.link, point.offset)
    return jac


def jacobian_dot_qdot(model: MultibodyModel, q, qdot, point: PointSpec) -> np.ndarray:
    """(d/dq (J qdot)) qdot: point acceleration at zero qddot."""
    q, qdot = _check_q(model, q, qdot)
    _check_point(model, point)
    _, _, _, acc = _Frames(model, q, qdot).point(model, point.link, point.offset)
    return np.array(acc)


def point_kinematics(model: MultibodyModel, q, qdot, point: PointSpec):
    """(position, J, velocity, J-dot qdot) for one point, sharing the sweep."""
    q, qdot = _check_q(model, q, qdot)
    _check_point(model, point)
    pos, jac, vel, acc = _Frames(model, q, qdot).point(model, point.link, point.offset)
    return pos, jac, vel, acc


def kinetic_energy(model: MultibodyModel, q, qdot) -> float:
    q, qdot = _check_q(model, q, qdot)
    return 0.5 * float(qdot @ mass_matrix(model, q) @ qdot)


def potential_energy(model: MultibodyModel, q) -> float:
    q, _ = _check_q(model, q)
    fr = _Frames(model, q, None)
    gx, gz = model.gravity_vector
    pe = 0.0
    for i, link in enumerate(model.links):
        (px, pz), _, _, _ = fr.point(model, i, link.com_offset)
        pe -= link.mass * (gx * px + gz * pz)
    return pe


def center_of_mass(model: MultibodyModel, q) -> np.ndarray:
    q, _ = _check_q(model, q)
    fr = _Frames(model, q, None)
    acc = np.zeros(2)
    for i, link in enumerate(model.links):
        pos, _, _, _ = fr.point(model, i, link.com_offset)
        acc += link.mass * np.array(pos)
    return acc / model.total_mass


# -- model documents ---------------------------------------------------------

MODEL_SCHEMA_VERSION = 1


def model_from_dict(doc: dict, source: str | None = None) -> MultibodyModel:
    """Build a model from the parsed structured-text document.

    Schema (version 1)::

        version: 1
        name: <str>
        gravity: [gx, gz]
        links:  [{name, mass, com: [x, z], inertia, length}]
        joints: [{name, type, parent: <link name or null>, origin: [x, z],
                  axis: [x, z] (prismatic only), actuated: bool}]   # joint i drives link i
        points: {<name>: {link: <link name>, offset: [x, z]}}
        torque_limits: [<N m per actuated joint>]   (optional)
    """
    try:
        version = doc["version"]
    except (KeyError, TypeError):
        raise ConfigError("model document needs a 'version' field", source=source) from None
    if version != MODEL_SCHEMA_VERSION:
        raise ConfigError(f"unsupported model version {version!r}", source=source)
    try:
        links = [
            LinkSpec(
                name=str(l["name"]),
                mass=float(l["mass"]),
                com_offset=tuple(float(v) for v in l["com"]),
                inertia=float(l["inertia"]),
                length=float(l.get("length", 0.0)),
            )
            for l in doc["links"]
        ]
        names = {l.name: i for i, l in enumerate(links)}
        joints = []
        for j in doc["joints"]:
            parent = j.get("parent")
            joints.append(
                JointSpec(
                    name=str(j["name"]),
                    type=str(j["type"]),
                    parent_link=None if parent is None else names[parent],
                    origin=tuple(float(v) for v in j.get("origin", (0.0, 0.0))),
                    axis=tuple(float(v) for v in j.get("axis", (1.0, 0.0))),
                    actuated=bool(j.get("actuated", False)),
                )
            )
        points = {
            str(k): PointSpec(names[v["link"]], tuple(float(c) for c in v.get("offset", (0, 0))))
            for k, v in (doc.get("points") or {}).items()
        }
        limits = doc.get("torque_limits")
        return MultibodyModel(
            links=tuple(links),
            joints=tuple(joints),
            gravity_vector=tuple(float(v) for v in doc["gravity"]),
            name=str(doc.get("name", "model")),
            points=points,
            torque_limits=None if limits is None else tuple(float(v) for v in limits),
        )
    except KeyError as exc:
        raise ConfigError(f"missing or unknown key {exc}", source=source) from None
    except ContractViolation as exc:
        raise ConfigError(str(exc), source=source) from None


def load_model(path) -> MultibodyModel:
    from .config import load_document

    path = Path(path)
    return model_from_dict(load_document(path), source=str(path))
