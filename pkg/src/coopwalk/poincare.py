"""Poincaré return maps, fixed points, monodromy matrices and the kappa sweep.

A return problem is described by how a section point is turned into an initial
hybrid state (`unchart`) and by one or more *parts*. Each part names the
events that count as returns for it, how many such returns close the cycle
(N^d, N^h for two agents whose periods satisfy N^d T^d = N^h T^h), and a chart
mapping the post-event state to section coordinates. The map output is the
concatenation of the part charts, each evaluated at that part's final return.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .errors import CoopwalkError, NonConvergence, NoReturn, SingularJacobian
from .hybrid import Event, HybridSystem, SimOptions, simulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SectionPart:
    is_return: Callable[[Event], bool]
    chart: Callable[[np.ndarray], np.ndarray]
    crossings: int = 1
    name: str = "part"


@dataclass(frozen=True)
class ReturnProblem:
    system: HybridSystem
    unchart: Callable[[np.ndarray], tuple[Any, np.ndarray]]  # section coords -> (mode, state)
    parts: tuple[SectionPart, ...]
    t_budget: float
    opts: SimOptions = SimOptions(rtol=1e-11, atol=1e-12, h_max=0.02, record=False)
    hold0: Any = None
    # degenerate section points whose orbit collapses (returned unchanged with zero period)
    degenerate: Callable[[np.ndarray], bool] | None = None


@dataclass(frozen=True)
class ReturnResult:
    x_next: np.ndarray
    elapsed: float
    part_times: tuple[float, ...]
    x_final: np.ndarray


def return_map(problem: ReturnProblem, x) -> ReturnResult:
    x = np.asarray(x, dtype=float)
    if problem.degenerate is not None and problem.degenerate(x):
        return ReturnResult(x.copy(), 0.0, tuple(0.0 for _ in problem.parts), x.copy())
    mode0, s0 = problem.unchart(x)
    counts = [0] * len(problem.parts)
    results: list[np.ndarray | None] = [None] * len(problem.parts)
    times = [math.nan] * len(problem.parts)

    def stop(ev, traj):
        for i, part in enumerate(problem.parts):
            if results[i] is None and part.is_return(ev):
                counts[i] += 1
                if counts[i] == part.crossings:
                    results[i] = np.asarray(part.chart(ev.x_plus), dtype=float)
                    times[i] = ev.t
        return all(r is not None for r in results)

    try:
        traj = simulate(problem.system, mode0, s0, problem.t_budget, problem.opts, hold0=problem.hold0, stop=stop)
    except CoopwalkError as exc:
        raise NoReturn(f"simulation failed before returning: {exc}", cause=str(exc)) from exc
    if traj.failure:
        raise NoReturn(f"no return: {traj.failure}", cause=traj.failure)
    if any(r is None for r in results):
        raise NoReturn(f"no return within {problem.t_budget} s", cause="time budget")
    return ReturnResult(np.concatenate(results), float(max(times)), tuple(times), traj.x_final)


# ---------------------------------------------------------------- fixed points


def fd_step(x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    return rel * (1.0 + np.abs(x))


def jacobian(problem: ReturnProblem, x, rel: float = 1e-6, central: bool = True,
             fx: np.ndarray | None = None) -> np.ndarray:
    """Column-by-column finite-difference Jacobian of the return map."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x, rel)
    n = x.size
    if not central and fx is None:
        fx = return_map(problem, x).x_next
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        fp = return_map(problem, x + e).x_next
        if central:
            fm = return_map(problem, x - e).x_next
            cols.append((fp - fm) / (2 * h[i]))
        else:
            cols.append((fp - fx) / h[i])
    return np.column_stack(cols)


@dataclass
class FixedPoint:
    x: np.ndarray
    residual: float
    iterations: int
    period: float
    jacobian: np.ndarray | None = None


def find_fixed_point(problem: ReturnProblem, x_guess, tol: float = 1e-9, max_iter: int = 30,
                     rel_step: float = 1e-6, jacobian_guess: np.ndarray | None = None) -> FixedPoint:
    """Newton on E(x) = P(x) - x with a finite-difference Jacobian.

    With `jacobian_guess` (e.g. the monodromy matrix at a nearby parameter) the
    iteration starts as a chord method on that matrix and only re-evaluates the
    Jacobian when the residual stops contracting by at least half per step.
    """
    x = np.asarray(x_guess, dtype=float).copy()
    n = x.size
    Jp = None if jacobian_guess is None else np.asarray(jacobian_guess, dtype=float)
    res_prev = math.inf
    r = return_map(problem, x)
    for it in range(max_iter + 1):
        E = r.x_next - x
        res = float(np.max(np.abs(E))) if n else 0.0
        log.debug("newton it %d residual %.3e", it, res)
        if res <= tol:
            return FixedPoint(x, res, it, r.elapsed, Jp)
        if it == max_iter:
            break
        if Jp is None or res > 0.5 * res_prev:
            Jp = jacobian(problem, x, rel_step)
        J = Jp - np.eye(n)
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
            raise SingularJacobian(
                f"dE/dx is singular (sigma_min/sigma_max = {sv[-1] / sv[0]:.3e}); the fixed point is not isolated"
            )
        dx = np.linalg.solve(J, -E)
        # damped step: accept the first fraction that reduces the residual
        lam = 1.0
        rn = None
        while lam > 1e-4:
            try:
                xn = x + lam * dx
                rn = return_map(problem, xn)
                if np.max(np.abs(rn.x_next - xn)) < res or lam <= 1.0 / 64:
                    break
            except NoReturn:
                rn = None
            lam *= 0.5
        if rn is None:
            raise NonConvergence(f"Newton step left the basin of the return map (residual {res:.3e})")
        x, r, res_prev = x + lam * dx, rn, res
    raise NonConvergence(f"fixed point not found in {max_iter} iterations (residual {res:.3e})")


# ---------------------------------------------------------------- monodromy


@dataclass
class PoincareReport:
    fixed_point: np.ndarray
    residual: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float
    verdict: str
    period: float

    def to_dict(self) -> dict:
        return {
            "fixed_point": [float(v) for v in self.fixed_point],
            "residual": float(self.residual),
            "jacobian": np.asarray(self.jacobian, dtype=float).tolist(),
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "spectral_radius": float(self.spectral_radius),
            "verdict": self.verdict,
            "period": float(self.period),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


STABILITY_MARGIN = 1e-6


def verdict_for(rho: float, period: float) -> str:
    if period <= 1e-12:
        return "marginal"  # degenerate orbit: the cycle collapses to a point
    if rho < 1.0 - STABILITY_MARGIN:
        return "stable"
    if rho > 1.0 + STABILITY_MARGIN:
        return "unstable"
    return "marginal"


def sorted_eigenvalues(J: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvals(J)
    return ev[np.lexsort((ev.imag, -np.abs(ev)))]


def monodromy(problem: ReturnProblem, fixed_point, rel_step: float = 1e-6, residual: float | None = None,
              period: float | None = None) -> PoincareReport:
    x = np.asarray(fixed_point, dtype=float)
    if residual is None or period is None:
        r = return_map(problem, x)
        residual = float(np.max(np.abs(r.x_next - x))) if x.size else 0.0
        period = r.elapsed
    J = jacobian(problem, x, rel_step)
    ev = sorted_eigenvalues(J)
    rho = float(np.max(np.abs(ev))) if ev.size else 0.0
    return PoincareReport(x, residual, J, ev, rho, verdict_for(rho, period), period)


def analyze(problem: ReturnProblem, x_guess, tol: float = 1e-9, rel_step: float = 1e-6,
            jacobian_guess: np.ndarray | None = None) -> PoincareReport:
    fp = find_fixed_point(problem, x_guess, tol=tol, rel_step=rel_step, jacobian_guess=jacobian_guess)
    return monodromy(problem, fp.x, rel_step, fp.residual, fp.period)


# ---------------------------------------------------------------- periods


def common_multiples(T_a: float, T_b: float, rel_tol: float = 1e-6, max_n: int = 64) -> tuple[int, int]:
    """Smallest positive (N_a, N_b) with N_a T_a = N_b T_b to a relative tolerance."""
    if not (T_a > 0 and T_b > 0):
        raise ValueError("periods must be positive")
    frac = Fraction(T_b / T_a).limit_denominator(max_n)
    n_a, n_b = frac.numerator, frac.denominator
    if abs(n_a * T_a - n_b * T_b) > rel_tol * n_a * T_a:
        raise NonConvergence(f"periods {T_a} and {T_b} have no common multiple with N <= {max_n}")
    return n_a, n_b


# ---------------------------------------------------------------- kappa sweep


@dataclass
class SweepRow:
    kappa: float
    residual: float
    spectral_radius: float
    verdict: str
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    fixed_point: np.ndarray | None = None
    error: str | None = None


@dataclass
class SweepTable:
    rows: list

    @property
    def kappa_max_stable(self) -> float | None:
        """Largest kappa such that every grid point up to it is stable."""
        best = None
        for r in self.rows:
            if r.verdict != "stable":
                break
            best = r.kappa
        return best

    def max_eigen_jump(self) -> float:
        """Largest change of the sorted eigenvalue list between adjacent stable rows."""
        jump = 0.0
        for a, b in zip(self.rows, self.rows[1:]):
            if a.verdict == "stable" and b.verdict == "stable":
                jump = max(jump, eigen_distance(a.eigenvalues, b.eigenvalues))
        return jump

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["kappa", "residual", "spectral_radius", "verdict", "error"])
        for r in self.rows:
            w.writerow([repr(float(r.kappa)), repr(float(r.residual)), repr(float(r.spectral_radius)), r.verdict, r.error or ""])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kappa_max_stable": self.kappa_max_stable,
            "max_eigen_jump": self.max_eigen_jump(),
            "rows": [
                {
                    "kappa": float(r.kappa),
                    "residual": float(r.residual),
                    "spectral_radius": float(r.spectral_radius),
                    "verdict": r.verdict,
                    "eigenvalues": [[float(e.real), float(e.imag)] for e in r.eigenvalues],
                    "fixed_point": None if r.fixed_point is None else [float(v) for v in r.fixed_point],
                    "error": r.error,
                }
                for r in self.rows
            ],
        }


def eigen_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Optimal-matching distance between two eigenvalue multisets (small sizes: greedy on sorted order
    refined by exhaustive matching when n <= 8)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size != b.size:
        return math.inf
    n = a.size
    if n == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    if n <= 8:
        from itertools import permutations

        return float(min(max(cost[i, p[i]] for i in range(n)) for p in permutations(range(n))))
    used = set()
    worst = 0.0
    for i in np.argsort(-np.abs(a)):
        j = min((j for j in range(n) if j not in used), key=lambda j: cost[i, j])
        used.add(j)
        worst = max(worst, cost[i, j])
    return float(worst)


def theorem1_experiment(problem_for: Callable[[float], ReturnProblem], kappa_grid: Sequence[float], x_guess,
                        tol: float = 1e-9, rel_step: float = 1e-6) -> SweepTable:
    """Warm-started fixed point + monodromy per kappa; failures are recorded, not raised."""
    rows = []
    guess = np.asarray(x_guess, dtype=float)
    jac = None
    for kappa in kappa_grid:
        try:
            prob = problem_for(float(kappa))
            rep = analyze(prob, guess, tol=tol, rel_step=rel_step, jacobian_guess=jac)
            rows.append(SweepRow(float(kappa), rep.residual, rep.spectral_radius, rep.verdict, rep.eigenvalues, rep.fixed_point))
            guess, jac = rep.fixed_point, rep.jacobian
        except CoopwalkError as exc:
            log.warning("kappa=%g failed: %s", kappa, exc)
            rows.append(SweepRow(float(kappa), math.nan, math.nan, "failed", error=f"{type(exc).__name__}: {exc}"))
    return SweepTable(rows)
