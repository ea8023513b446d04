"""Dense strictly convex QP by a primal active-set method.

    minimize   1/2 z^T H z + g^T z
    subject to A z + b >= 0,   lb <= z <= ub

Box bounds are folded into the inequality rows. A feasible start comes from
the previous working set when one is supplied (warm start) or from a phase-1
problem that minimizes a single shared slack. Working-set updates use the
lowest index on ties, so runs are deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, MaxIterations, QPInfeasible

log = logging.getLogger(__name__)

FEAS_TOL = 1e-10
MULT_TOL = 1e-12


@dataclass(frozen=True)
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray  # (m, n)
    b: np.ndarray  # (m,)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ContractViolation("H must be square")
        g = np.asarray(self.g, dtype=float).reshape(n)
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).reshape(A.shape[0])
        for name, v in (("H", H), ("g", g), ("A", A), ("b", b)):
            if not np.all(np.isfinite(v)):
                raise ContractViolation(f"QP data {name} is not finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        for name in ("lb", "ub"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).reshape(n))
        if self.lb is not None and self.ub is not None and np.any(self.lb > self.ub):
            raise ContractViolation("box bounds with lb > ub")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def min_hessian_eig(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.H + self.H.T))[0])

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """All inequality rows, general rows first, then lower and upper bounds."""
        A, b = [self.A], [self.b]
        n = self.n
        if self.lb is not None:
            keep = np.isfinite(self.lb)
            A.append(np.eye(n)[keep])
            b.append(-self.lb[keep])
        if self.ub is not None:
            keep = np.isfinite(self.ub)
            A.append(-np.eye(n)[keep])
            b.append(self.ub[keep])
        return np.vstack(A), np.concatenate(b)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QPReport:
    stationarity: float
    primal_infeasibility: float
    complementarity: float
    dual_infeasibility: float
    iterations: int
    active: tuple[int, ...]
    phase1: bool
    objective: float


@dataclass
class QPResult:
    z: np.ndarray
    multipliers: np.ndarray  # one per row of QPProblem.rows()
    report: QPReport


@dataclass
class WarmStart:
    """Working set carried between consecutive solves of one control loop."""

    active: tuple[int, ...] = field(default_factory=tuple)


def _eqp(H, grad, Aw):
    """Step p minimizing 1/2 p^T H p + grad^T p with Aw p = 0, and multipliers."""
    n = H.shape[0]
    k = Aw.shape[0]
    if k == 0:
        return np.linalg.solve(H, -grad), np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = -Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-grad, np.zeros(k)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def _independent(Aw: np.ndarray, row: np.ndarray, tol=1e-10) -> bool:
    if Aw.shape[0] == 0:
        return bool(np.linalg.norm(row) > tol)
    M = np.vstack([Aw, row])
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] > tol * max(s[0], 1.0))


def _initial_working_set(A, b, z, candidates):
    W: list[int] = []
    r = A @ z + b
    for i in candidates:
        if abs(r[i]) <= 1e-9 * (1.0 + abs(b[i])) and len(W) < A.shape[1] and _independent(A[W], A[i]):
            W.append(i)
    return W


def _active_set(H, g, A, b, z, W, max_iter):
    """Primal active-set iterations from a feasible z with working set W."""
    n = H.shape[0]
    m = A.shape[0]
    W = list(W)
    at_min = False  # z minimizes the objective on the current working set
    for it in range(max_iter):
        grad = H @ z + g
        p, lam = _eqp(H, grad, A[W] if W else np.zeros((0, n)))
        scale = 1.0 + float(np.max(np.abs(z)))
        if at_min or len(W) == n or np.max(np.abs(p)) <= 1e-13 * scale:
            at_min = False
            # the equality-constrained minimizer on W: re-solve for an exact z
            if W:
                j = int(np.argmin(lam))
                if lam[j] < -MULT_TOL:
                    W.pop(j)
                    continue
            mult = np.zeros(m)
            for k, i in enumerate(W):
                mult[i] = lam[k]
            return z, mult, W, it
        # step to the first blocking constraint
        Ap = A @ p
        r = A @ z + b
        alpha = 1.0
        block = -1
        inW = set(W)
        for i in range(m):
            if i in inW or Ap[i] >= -1e-14:
                continue
            a_i = max(r[i], 0.0) / -Ap[i]
            if a_i < alpha - 1e-15:
                alpha, block = a_i, i
        z = z + alpha * p
        if block >= 0:
            W.append(block)
        else:
            at_min = True
    raise MaxIterations(f"active-set QP did not terminate in {max_iter} iterations")


def _polish(H, g, A, b, W):
    """Exact solution of the KKT system on the final working set."""
    n = H.shape[0]
    k = len(W)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = -A[W].T
    K[n:, :n] = A[W]
    rhs = np.concatenate([-g, -b[W]])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def _phase1(A, b, z0, max_iter):
    """Feasible point by min 1/2 eps |z - z0|^2 + 1/2 eps t^2 + t s.t. A z + b + t >= 0, t >= 0."""
    m, n = A.shape
    eps = 1e-6
    r0 = A @ z0 + b
    t0 = max(0.0, float(-np.min(r0))) if m else 0.0
    H1 = eps * np.eye(n + 1)
    g1 = np.concatenate([-eps * z0, [1.0]])
    A1 = np.vstack([np.hstack([A, np.ones((m, 1))]), np.concatenate([np.zeros(n), [1.0]])])
    b1 = np.concatenate([b, [0.0]])
    zt = np.concatenate([z0, [t0]])
    W = _initial_working_set(A1, b1, zt, range(m + 1))
    zt, _, W, it = _active_set(H1, g1, A1, b1, zt, W, max_iter)
    return zt[:n], float(zt[n]), it


def solve_qp(problem: QPProblem, warm: WarmStart | None = None, max_iter: int = 500,
             z0: np.ndarray | None = None) -> QPResult:
    """KKT-certified minimizer; raises QPInfeasible with the most violated row.

    Variables with lb == ub are eliminated before the active-set iterations.
    """
    if problem.min_hessian_eig() <= 0:
        raise ContractViolation("QP Hessian must be positive definite")
    n = problem.n
    fixed = np.zeros(n, dtype=bool)
    if problem.lb is not None and problem.ub is not None:
        fixed = problem.lb == problem.ub
    if not np.any(fixed):
        return _solve(problem, warm, max_iter, z0)
    free = ~fixed
    zf = problem.lb[fixed]
    H = 0.5 * (problem.H + problem.H.T)
    red = QPProblem(
        H[np.ix_(free, free)], problem.g[free] + H[np.ix_(free, fixed)] @ zf,
        problem.A[:, free], problem.b + problem.A[:, fixed] @ zf,
        None if problem.lb is None else problem.lb[free], None if problem.ub is None else problem.ub[free],
    )
    res = _solve(red, warm, max_iter, None if z0 is None else np.asarray(z0, dtype=float)[free])
    z = np.empty(n)
    z[free] = res.z
    z[fixed] = zf
    # expand multipliers to the full row layout: general, lower, upper
    m = problem.A.shape[0]
    lam_red = res.multipliers
    resid = H @ z + problem.g - problem.A.T @ lam_red[:m]
    lam_full = [lam_red[:m]]
    k = m
    for bound, sign in ((problem.lb, 1.0), (problem.ub, -1.0)):
        if bound is None:
            continue
        keep = np.isfinite(bound)
        mult = np.zeros(n)
        nf = int(np.sum(keep & free))
        mult[keep & free] = lam_red[k:k + nf]
        k += nf
        mult[keep & fixed] = np.maximum(sign * resid[keep & fixed], 0.0)
        lam_full.append(mult[keep])
    mult = np.concatenate(lam_full)
    act = tuple(int(i) for i in np.flatnonzero(mult > 0))
    report = kkt_report(problem, z, mult, res.report.iterations, act, res.report.phase1)
    return QPResult(z, mult, report)


def _solve(problem: QPProblem, warm: WarmStart | None, max_iter: int, z0) -> QPResult:
    H = 0.5 * (problem.H + problem.H.T)
    if problem.min_hessian_eig() <= 0:
        raise ContractViolation("QP Hessian must be positive definite")
    g = problem.g
    A, b = problem.rows()
    m, n = A.shape
    z_unc = np.linalg.solve(H, -g)
    z = None
    W: list[int] = []
    phase1 = False
    iters = 0
    # warm start: the minimizer on the previous working set, if feasible
    if warm is not None and warm.active and all(i < m for i in warm.active):
        Wc = []
        for i in warm.active:
            if _independent(A[Wc], A[i]):
                Wc.append(i)
        try:
            zw, _ = _polish(H, g, A, b, Wc)
            if m == 0 or np.min(A @ zw + b) >= -FEAS_TOL:
                z, W = zw, Wc
        except np.linalg.LinAlgError:
            pass
    if z is None:
        if m == 0 or np.min(A @ z_unc + b) >= -FEAS_TOL:
            z = z_unc
            W = _initial_working_set(A, b, z, range(m))
        else:
            start = z_unc if z0 is None else np.asarray(z0, dtype=float)
            z, t, iters = _phase1(A, b, start, max_iter)
            phase1 = True
            r = A @ z + b
            if t > 1e-9 or np.min(r) < -1e-9:
                worst = int(np.argmin(r))
                raise QPInfeasible(
                    f"no point satisfies all rows (row {worst} violated by {-r[worst]:.3e})",
                    worst_row=worst, violation=float(-r[worst]),
                )
            z = z + 0.0
            # tiny residual violations of phase 1 are absorbed by the polish below
            W = _initial_working_set(A, b, z, range(m))
    z, mult, W, it2 = _active_set(H, g, A, b, z, W, max_iter)
    iters += it2
    if W:
        z, lam = _polish(H, g, A, b, W)
        mult = np.zeros(m)
        mult[W] = lam
    report = kkt_report(problem, z, mult, iters, tuple(W), phase1)
    if warm is not None:
        warm.active = tuple(W)
    return QPResult(z, mult, report)


def kkt_report(problem: QPProblem, z, mult, iterations=0, active=(), phase1=False) -> QPReport:
    A, b = problem.rows()
    H = 0.5 * (problem.H + problem.H.T)
    r = A @ z + b if A.shape[0] else np.zeros(0)
    stat = H @ z + problem.g - (A.T @ mult if A.shape[0] else 0.0)
    return QPReport(
        stationarity=float(np.max(np.abs(stat))) if stat.size else 0.0,
        primal_infeasibility=float(max(0.0, -np.min(r))) if r.size else 0.0,
        complementarity=float(np.max(np.abs(mult * r))) if r.size else 0.0,
        dual_infeasibility=float(max(0.0, -np.min(mult))) if r.size else 0.0,
        iterations=int(iterations),
        active=tuple(int(i) for i in active),
        phase1=phase1,
        objective=problem.objective(z),
    )
