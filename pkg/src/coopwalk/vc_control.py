"""Virtual-constraint outputs and the input-output linearizing baseline controller.

Position outputs (relative degree 2) are  y2 = C q - bezier(s),  with s a phase
variable; velocity outputs (relative degree 1) are  y1 = c qdot - v_des.
Along the constrained dynamics with generalized force tau = B u + E F,

    [y1dot; y2ddot] = A u + b0 + b1 F,

and the baseline law u = -A^T (A A^T)^-1 (b + l) with l = [Kp y1; Kd y2dot + Kp y2]
imposes y1dot = -Kp y1, y2ddot = -Kd y2dot - Kp y2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .contact import ContactSet, accel_map
from .errors import ContractViolation, DecouplingSingular
from .multibody import AgentState, MultibodyModel, PointSpec, point_kinematics

log = logging.getLogger(__name__)

DECOUPLING_TOL = 1e-10


# ---------------------------------------------------------------- Bezier


@dataclass(frozen=True)
class Bezier:
    """Vector Bezier polynomial; `coeffs` has shape (outputs, degree + 1)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] < 2:
            raise ContractViolation("Bezier needs degree >= 1")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @staticmethod
    def _basis(m: int, s: float) -> np.ndarray:
        k = np.arange(m + 1)
        binom = np.array([comb(m, i) for i in k], dtype=float)
        return binom * s**k * (1.0 - s) ** (m - k)

    def __call__(self, s: float) -> np.ndarray:
        return self.coeffs @ self._basis(self.degree, s)

    def d1(self, s: float) -> np.ndarray:
        m = self.degree
        return m * np.diff(self.coeffs, axis=1) @ self._basis(m - 1, s)

    def d2(self, s: float) -> np.ndarray:
        m = self.degree
        if m < 2:
            return np.zeros(self.coeffs.shape[0])
        return m * (m - 1) * np.diff(self.coeffs, n=2, axis=1) @ self._basis(m - 2, s)


# ---------------------------------------------------------------- phases


@dataclass(frozen=True)
class PhaseValue:
    s: float
    grad: np.ndarray  # ds/dq
    curv: float  # d/dt(ds/dq) . qdot
    rate: float  # explicit ds/dt
    sdot: float


@dataclass(frozen=True)
class LinearPhase:
    """s = (theta . q - start) / (end - start)."""

    theta: np.ndarray
    start: float
    end: float

    def evaluate(self, model, t, q, qdot) -> PhaseValue:
        th = np.asarray(self.theta, dtype=float)
        span = self.end - self.start
        grad = th / span
        return PhaseValue((th @ q - self.start) / span, grad, 0.0, 0.0, float(grad @ qdot))


@dataclass(frozen=True)
class PointPhase:
    """s = ((x_base - x_point) - start) / (end - start): horizontal progress over a contact point."""

    point: PointSpec
    base_index: int
    start: float
    end: float

    def evaluate(self, model, t, q, qdot) -> PhaseValue:
        pos, jac, vel, acc = point_kinematics(model, q, qdot, self.point)
        span = self.end - self.start
        grad = -jac[0].copy()
        grad[self.base_index] += 1.0
        grad /= span
        curv = -acc[0] / span
        return PhaseValue((q[self.base_index] - pos[0] - self.start) / span, grad, curv, 0.0, float(grad @ qdot))


@dataclass(frozen=True)
class ClockPhase:
    """s = (t - t0) / period."""

    period: float
    t0: float = 0.0

    def evaluate(self, model, t, q, qdot) -> PhaseValue:
        n = len(q)
        return PhaseValue((t - self.t0) / self.period, np.zeros(n), 0.0, 1.0 / self.period, 1.0 / self.period)


# ---------------------------------------------------------------- outputs


@dataclass(frozen=True)
class OutputDefinition:
    """y1 = C1 qdot - v_des (velocity level) and y2 = C2 q - bezier(s) (position level)."""

    phase: object
    C2: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bezier: Bezier | None = None
    C1: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    v_des: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        c2 = np.atleast_2d(np.asarray(self.C2, dtype=float))
        c1 = np.atleast_2d(np.asarray(self.C1, dtype=float))
        if c2.size == 0:
            c2 = np.zeros((0, max(c1.shape[1], 0)))
        if c1.size == 0:
            c1 = np.zeros((0, c2.shape[1]))
        object.__setattr__(self, "C2", c2)
        object.__setattr__(self, "C1", c1)
        object.__setattr__(self, "v_des", np.atleast_1d(np.asarray(self.v_des, dtype=float)).reshape(-1))
        if c2.shape[0] and (self.bezier is None or self.bezier.coeffs.shape[0] != c2.shape[0]):
            raise ContractViolation("one Bezier row per position output required")
        if self.v_des.shape[0] != c1.shape[0]:
            raise ContractViolation("one desired velocity per velocity output required")

    @property
    def n1(self) -> int:
        return self.C1.shape[0]

    @property
    def n2(self) -> int:
        return self.C2.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.n1 + self.n2

    def check_square(self, model: MultibodyModel) -> None:
        if self.n_outputs != model.n_inputs:
            raise ContractViolation(f"{self.n_outputs} outputs for {model.n_inputs} inputs")

    def _phase(self, model, t, q, qdot):
        ph = self.phase.evaluate(model, t, q, qdot)
        lo, hi = self.s_range
        if ph.s < lo or ph.s > hi:
            log.debug("phase %.4f outside [%g, %g]; clamped", ph.s, lo, hi)
        return ph, min(max(ph.s, lo), hi), lo <= ph.s <= hi


@dataclass(frozen=True)
class OutputValues:
    y1: np.ndarray
    y2: np.ndarray
    y2dot: np.ndarray
    s: float


def output_values(model, defn: OutputDefinition, state: AgentState, t: float = 0.0) -> OutputValues:
    q, qd = state.q, state.qdot
    ph, s, inside = defn._phase(model, t, q, qd)
    y1 = defn.C1 @ qd - defn.v_des
    if defn.n2:
        d1 = defn.bezier.d1(s) if inside else np.zeros(defn.n2)
        y2 = defn.C2 @ q - defn.bezier(s)
        y2dot = defn.C2 @ qd - d1 * ph.sdot
    else:
        y2 = y2dot = np.zeros(0)
    return OutputValues(y1, y2, y2dot, ph.s)


# ---------------------------------------------------------------- linearization


@dataclass(frozen=True)
class LinearizationData:
    """[y1dot; y2ddot] = A u + b0 + b1 F."""

    A: np.ndarray
    b0: np.ndarray
    b1: np.ndarray

    def b(self, F=None) -> np.ndarray:
        if F is None or self.b1.shape[1] == 0:
            return self.b0.copy()
        return self.b0 + self.b1 @ np.asarray(F, dtype=float)

    @property
    def min_singular_value(self) -> float:
        return float(np.linalg.svd(self.A, compute_uv=False).min())


def linearization(
    model: MultibodyModel,
    contact: ContactSet,
    defn: OutputDefinition,
    state: AgentState,
    force_map: np.ndarray | None = None,
    t: float = 0.0,
    *,
    terms=None,
    amap=None,
) -> LinearizationData:
    """Decoupling matrix and drift; `force_map` E gives the generalized force E F of the coupling."""
    q, qd = state.q, state.qdot
    n = model.n_dof
    E = np.zeros((n, 0)) if force_map is None else np.asarray(force_map, dtype=float)
    am = accel_map(model, contact, state, terms=terms) if amap is None else amap
    ph, s, inside = defn._phase(model, t, q, qd)
    rows_phi, rows_zeta = [defn.C1], [np.zeros(defn.n1)]
    if defn.n2:
        if inside:
            d1, d2 = defn.bezier.d1(s), defn.bezier.d2(s)
        else:
            d1 = d2 = np.zeros(defn.n2)
        rows_phi.append(defn.C2 - np.outer(d1, ph.grad))
        rows_zeta.append(-d2 * ph.sdot**2 - d1 * ph.curv)
    phi = np.vstack(rows_phi)
    zeta = np.concatenate(rows_zeta)
    pk = phi @ am.K
    return LinearizationData(A=pk @ model.B, b0=phi @ am.drift + zeta, b1=pk @ E)


# ---------------------------------------------------------------- control law


@dataclass(frozen=True)
class PdGains:
    kp: float | np.ndarray = 25.0
    kd: float | np.ndarray = 10.0
    kp_velocity: float | np.ndarray | None = None

    def __post_init__(self):
        for name in ("kp", "kd", "kp_velocity"):
            v = getattr(self, name)
            if v is not None and np.any(np.asarray(v) <= 0):
                raise ContractViolation(f"{name} must be positive")


def output_feedback(values: OutputValues, gains: PdGains) -> np.ndarray:
    k1 = gains.kp if gains.kp_velocity is None else gains.kp_velocity
    return np.concatenate([np.asarray(k1) * values.y1, np.asarray(gains.kd) * values.y2dot + np.asarray(gains.kp) * values.y2])


def _pinv_rows(A: np.ndarray) -> np.ndarray:
    gram = A @ A.T
    if gram.size == 0:
        return np.zeros((A.shape[1], 0))
    emin = float(np.linalg.eigvalsh(gram).min())
    if emin < DECOUPLING_TOL:
        raise DecouplingSingular(f"decoupling matrix near singular (min eig A A^T = {emin:.3e})")
    return A.T @ np.linalg.inv(gram)


def baseline_control(lin: LinearizationData, values: OutputValues, gains: PdGains, F=None) -> np.ndarray:
    """u = -A^T (A A^T)^-1 (b(F) + l)."""
    return -_pinv_rows(lin.A) @ (lin.b(F) + output_feedback(values, gains))


def baseline_control_affine(lin: LinearizationData, values: OutputValues, gains: PdGains):
    """(u0, U1) with baseline u(F) = u0 + U1 F."""
    P = _pinv_rows(lin.A)
    return -P @ (lin.b0 + output_feedback(values, gains)), -P @ lin.b1
