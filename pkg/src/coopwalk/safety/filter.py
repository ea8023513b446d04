"""Sampled QP safety filter over (u_dog, F).

At each control instant the filter builds

    minimize  w_u |u - Gamma_d(F)|^2 + |F - F_b|^2_W
    s.t.      ECBF rows,  u_min <= u <= u_max,  F_min <= F <= F_max

where Gamma_d(F) = u0 + U1 F is the dog's virtual-constraint law (affine in F
through its force feedforward) and F_b the leash baseline. The baseline point
(Gamma_d(F_b), F_b) has zero cost, so whenever it satisfies every row the
filter returns it. W = I + (w_t - 1) t t^T weights the component along the dog's
heading t; w_u = w_t = 1 gives the unweighted cost. The result is held until the next sample.

If the rows and boxes are jointly infeasible, the ECBF rows are relaxed by a
single shared slack sigma >= 0 with cost slack_weight/2 sigma^2 and a safety
event is logged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..complex import DOG, LeashedPair, _leash_vectors, affine_agents, agent_terms
from ..errors import ContractViolation, QPInfeasible
from .ecbf import N_DECISION, CriticalPoints, EcbfParams, EcbfRows, ObstacleField, ecbf_rows
from .qp import QPProblem, QPReport, WarmStart, solve_qp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SafetyParams:
    ecbf: EcbfParams = EcbfParams()
    F_max: float = 200.0  # N, per component
    u_max: tuple[float, ...] | None = None  # default: dog model torque limits
    control_rate: float = 1000.0  # Hz
    slack_weight: float = 1e6
    torque_weight: float = 1.0  # cost weight of |u - Gamma_d(F)|^2 relative to |F - F_b|^2
    tangential_weight: float = 1.0  # weight of the F deviation along the dog's heading (lateral weight 1)
    vertical_force: bool = False  # leash F_z is zero unless enabled

    def __post_init__(self):
        if not 100.0 <= self.control_rate <= 10000.0:
            raise ContractViolation("control rate must lie in [100, 10000] Hz")
        if not self.F_max > 0:
            raise ContractViolation("F_max must be positive")
        if not (self.torque_weight > 0 and self.tangential_weight > 0 and self.slack_weight > 0):
            raise ContractViolation("cost weights must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.control_rate


@dataclass(frozen=True)
class EcbfQpProblem:
    qp: QPProblem
    rows: EcbfRows
    baseline: np.ndarray  # zero-cost point (Gamma_d(F_b), F_b)
    u0: np.ndarray
    U1: np.ndarray
    F_b: np.ndarray

    def min_hessian_eig(self) -> float:
        return self.qp.min_hessian_eig()


@dataclass
class FilterStep:
    t: float
    z: np.ndarray
    baseline: np.ndarray
    active_rows: tuple[int, ...]
    min_row_at_baseline: float
    slack: float = 0.0
    report: QPReport | None = None


def build_problem(pair: LeashedPair, mode, x, field_: ObstacleField, points: CriticalPoints, params: SafetyParams,
                  F_prev: np.ndarray | None) -> EcbfQpProblem:
    ags = agent_terms(pair, mode, x)
    d, h = ags
    lv, hv = _leash_vectors(pair)
    held = F_prev is not None
    F_in = np.zeros(3) if F_prev is None else np.asarray(F_prev, dtype=float)
    _, _, F_b, _, _, _, _ = _kernels.leash_loop(
        lv, hv, d.p, d.v, d.lever, d.track.psi, d.track.Y, h.p, h.v, h.lever, h.track.psi, h.track.Y, held, F_in)
    # dog baseline as an affine function of F
    w = d.walker
    B = w.model.B
    t = d.terms
    A = t.decoupling(B)
    u0 = -np.linalg.solve(A, t.drift_out() + t.feedback(w.gait.gains))
    U1 = -np.linalg.solve(A, t.Phi @ t.K @ (-d.J.T))
    nu = B.shape[1]
    # cost w_u |[I, -U1] z - u0|^2 + |[0, I] z - F_b|^2_W, W weighting the dog-heading component
    M1 = np.hstack([np.eye(nu), -U1])
    M2 = np.hstack([np.zeros((3, nu)), np.eye(3)])
    tan = np.array([np.cos(d.track.psi), np.sin(d.track.psi), 0.0])
    W = np.eye(3) + (params.tangential_weight - 1.0) * np.outer(tan, tan)
    wu = params.torque_weight
    H = 2.0 * (wu * M1.T @ M1 + M2.T @ W @ M2)
    g = -2.0 * (wu * M1.T @ u0 + M2.T @ W @ F_b)
    rows = ecbf_rows(pair, mode, x, field_, points, params.ecbf, affine=affine_agents(pair, mode, x, ags))
    u_max = np.asarray(params.u_max if params.u_max is not None else (w.model.torque_limits or (np.inf,) * nu))
    ub = np.concatenate([u_max, np.full(3, params.F_max)])
    lb = -ub
    if not params.vertical_force:
        lb[-1] = ub[-1] = 0.0
    qp = QPProblem(H, g, rows.A, rows.b, lb, ub)
    z_b = np.concatenate([u0 + U1 @ F_b, F_b])
    return EcbfQpProblem(qp, rows, z_b, u0, U1, F_b)


def _relaxed(problem: EcbfQpProblem, weight: float) -> QPProblem:
    qp = problem.qp
    n = qp.n
    k = qp.A.shape[0]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = qp.H
    H[n, n] = weight
    g = np.concatenate([qp.g, [0.0]])
    A = np.hstack([qp.A, np.ones((k, 1))])
    lb = np.concatenate([qp.lb, [0.0]])
    ub = np.concatenate([qp.ub, [np.inf]])
    return QPProblem(H, g, A, qp.b, lb, ub)


class SafetyFilter:
    """Controller hook for `ComplexSystem`: called at each sample, returns (u_dog, F)."""

    def __init__(self, field_: ObstacleField, points: CriticalPoints = CriticalPoints(),
                 params: SafetyParams = SafetyParams(), enabled: bool = True):
        self.field = field_
        self.points = points
        self.params = params
        self.enabled = enabled
        self.warm = WarmStart()
        self.events: list[dict] = []
        self.steps: list[FilterStep] = []
        self.max_deviation_when_slack = 0.0
        self.n_samples = 0
        self.n_active = 0
        self.keep_steps = False

    def __call__(self, pair: LeashedPair, mode, t, x, hold):
        F_prev = None if hold is None else hold[1]
        prob = build_problem(pair, mode, x, self.field, self.points, self.params, F_prev)
        self.n_samples += 1
        z_b = prob.baseline
        nu = z_b.size - 3
        if not self.enabled:
            return z_b[:nu].copy(), z_b[nu:].copy()
        slack = 0.0
        try:
            res = solve_qp(prob.qp, self.warm)
            z = res.z
            report = res.report
        except QPInfeasible as exc:
            rel = solve_qp(_relaxed(prob, self.params.slack_weight))
            z = rel.z[:N_DECISION]
            slack = float(rel.z[N_DECISION])
            report = rel.report
            self.warm = WarmStart()
            # report the ECBF row that binds the slack at the relaxed solution
            label = prob.rows.labels[int(np.argmin(prob.rows.values(z)))] if prob.rows.labels else None
            self.events.append({
                "t": float(t), "type": "qp_infeasible", "row": label,
                "violation": exc.violation, "slack": slack,
            })
            log.warning("safety QP infeasible at t=%.4f (%s); relaxed with slack %.3e", t, label, slack)
        rows_b = prob.rows.values(z_b) if prob.rows.A.shape[0] else np.zeros(0)
        if bool(np.all(rows_b > 0)):
            self.max_deviation_when_slack = max(self.max_deviation_when_slack, float(np.max(np.abs(z - z_b))))
        else:
            self.n_active += 1
        if self.keep_steps:
            self.steps.append(FilterStep(float(t), z.copy(), z_b.copy(), report.active,
                                         float(np.min(rows_b)) if rows_b.size else np.inf, slack, report))
        return z[:nu].copy(), z[nu:].copy()

    def events_json(self) -> list:
        return list(self.events)
