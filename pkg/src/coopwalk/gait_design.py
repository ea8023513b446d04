"""Periodic gait search for the two-domain walkers.

Gaits are hybrid-zero-dynamics consistent: the Bezier end coefficients place
the pre-impact configuration on the guard, and the second coefficients are
computed from the impact map so that post-impact states land back on the
zero-output manifold. What remains is a one-degree-of-freedom zero dynamics,
parameterized at the start of a step by the phase rate sdot; its periodic
value solves sdot+ (sdot0) = sdot0 and is found by shooting. A small Newton
loop then adjusts (step half-angle, torso lean) to meet a requested speed and
step duration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .contact import impact_map
from .errors import NonConvergence
from .hybrid import SimOptions, simulate
from .multibody import AgentState
from .vc_control import PdGains
from .walker import Gait, Walker, WalkerSystem

log = logging.getLogger(__name__)

DEGREE = 5


@dataclass(frozen=True)
class GaitShape:
    beta: float  # step half-angle (rad)
    lean: float  # constant torso pitch (rad; negative leans forward)
    swing_lead: float = 0.3  # fraction of 2 beta the swing leg runs ahead of linear progress
    end_slope: float = 0.0  # swing angular rate at touchdown relative to linear progress


def shape_coefficients(walker: Walker, shape: GaitShape) -> Gait:
    """Bezier coefficients with impact-invariant second coefficients."""
    L = walker.leg_length
    b = shape.beta
    M = DEGREE
    k = np.arange(M + 1)
    pitch = np.full(M + 1, shape.lean)
    swing = -b + 2 * b * k / M
    swing[2:M - 1] += 2 * b * shape.swing_lead
    swing[M - 1] = b - 2 * b * shape.end_slope / M
    alpha = np.vstack([pitch, swing])
    d = L * math.sin(b)
    gait = replace(walker.gait, alpha=alpha, phase_start=-d, phase_end=d)
    w = walker.with_gait(gait)
    # impact invariance: post-impact velocity must satisfy ydot = 0 in the next domain
    x_minus = w.hzd_state(1.0, 1.0, dom=0)
    _, x_plus = w.impact(0, x_minus)
    st = AgentState.from_x(x_plus)
    ph = w.defs[1].phase.evaluate(w.model, 0.0, st.q, st.qdot)
    if ph.sdot <= 0:
        raise NonConvergence("impact reverses the phase rate; gait shape infeasible")
    c2 = w.defs[1].C2
    alpha = alpha.copy()
    alpha[:, 1] = alpha[:, 0] + (c2 @ st.qdot) / (M * ph.sdot)
    return replace(gait, alpha=alpha)


@dataclass(frozen=True)
class StepResult:
    sdot_plus: float
    duration: float
    x_plus: np.ndarray


def zero_dynamics_step(walker: Walker, sdot0: float, opts: SimOptions | None = None) -> StepResult:
    """One step from the zero-output manifold at s = 0, through the impact."""
    opts = opts or SimOptions(rtol=1e-10, atol=1e-11, h_max=0.02)
    sys = WalkerSystem(walker)
    x0 = walker.hzd_state(0.0, sdot0, dom=0)
    T_budget = 20.0 * walker.gait.step_length / max(sdot0 * walker.gait.step_length, 1e-3)
    traj = simulate(sys, 0, x0, min(T_budget, 10.0), opts, stop=lambda ev, tr: True)
    if not traj.events:
        raise NonConvergence(f"step not completed (sdot0={sdot0:.4f}, failure={traj.failure})")
    xp = traj.x_final
    st = AgentState.from_x(xp)
    ph = walker.defs[1].phase.evaluate(walker.model, 0.0, st.q, st.qdot)
    return StepResult(ph.sdot, traj.t_final, xp)


def periodic_sdot(walker: Walker, sdot_guess: float = 2.0, tol: float = 1e-10, max_iter: int = 40) -> StepResult:
    """Solve sdot+(sdot0) = sdot0 by secant iterations."""
    a = sdot_guess
    ra = zero_dynamics_step(walker, a)
    fa = ra.sdot_plus - a
    b = ra.sdot_plus
    for _ in range(max_iter):
        rb = zero_dynamics_step(walker, b)
        fb = rb.sdot_plus - b
        if abs(fb) <= tol * max(1.0, abs(b)) or fb == fa:
            if abs(fb) > 1e-7:
                break
            return StepResult(b, rb.duration, rb.x_plus)
        a, b, fa = b, b - fb * (b - a) / (fb - fa), fb
        if not b > 0:
            raise NonConvergence("zero-dynamics shooting left the forward-walking region")
    raise NonConvergence("zero-dynamics fixed point not found")


def evaluate_shape(walker: Walker, shape: GaitShape, sdot_guess: float = 2.0):
    gait = shape_coefficients(walker, shape)
    w = walker.with_gait(gait)
    res = periodic_sdot(w, sdot_guess)
    speed = gait.step_length / res.duration
    fixed = w.hzd_state(0.0, res.sdot_plus, dom=0)
    gait = replace(gait, period=2.0 * res.duration, speed=speed, fixed_point=fixed)
    return w.with_gait(gait), res


def design_gait(walker: Walker, speed: float, step_time: float, shape0: GaitShape, max_iter: int = 20,
                tol: float = 1e-7) -> Walker:
    """Adjust (beta, lean) so the periodic gait has the requested speed and step duration."""
    p = np.array([shape0.beta, shape0.lean])
    target = np.array([speed, step_time])
    sdot = 2.0

    def metrics(p, sdot):
        sh = replace(shape0, beta=float(p[0]), lean=float(p[1]))
        w, res = evaluate_shape(walker, sh, sdot)
        return np.array([w.gait.speed, res.duration]), w, res.sdot_plus

    f, w, sdot = metrics(p, sdot)
    for it in range(max_iter):
        err = f - target
        log.info("gait design it %d: beta=%.5f lean=%.5f speed=%.5f step=%.5f", it, p[0], p[1], f[0], f[1])
        if np.max(np.abs(err / target)) < tol:
            return w
        J = np.zeros((2, 2))
        for j in range(2):
            dp = np.zeros(2)
            dp[j] = 1e-5
            fj, _, _ = metrics(p + dp, sdot)
            J[:, j] = (fj - f) / 1e-5
        step = np.linalg.solve(J, -err)
        lam = 1.0
        while True:
            try:
                fn, wn, sn = metrics(p + lam * step, sdot)
                if np.linalg.norm((fn - target) / target) < np.linalg.norm(err / target) or lam < 1e-3:
                    break
            except NonConvergence:
                pass
            lam *= 0.5
            if lam < 1e-3:
                raise NonConvergence("gait design line search failed")
        p, f, w, sdot = p + lam * step, fn, wn, sn
    raise NonConvergence("gait design did not reach the requested speed and period")


# Targets of the bundled gaits: equal step durations (so the two-agent cycle
# closes after one cycle of each) with the dog about 5 % faster.
# Output poles at -10 1/s: with the slower (-5, -5) pair the transverse
# dynamics do not settle within a 0.4 s step and the full-order orbit is unstable.
DEFAULT_GAINS = PdGains(kp=100.0, kd=20.0)
DEFAULT_TARGETS = {
    "human": dict(speed=1.0, step_time=0.40, shape=GaitShape(beta=0.21, lean=-0.12)),
    "dog": dict(speed=1.05, step_time=0.40, shape=GaitShape(beta=0.24, lean=-0.26)),
}


def build_default_gaits(out_dir=None) -> dict:
    """Re-run the design for the bundled models and write <name>_gait.yaml files."""
    from pathlib import Path

    from .multibody import load_model
    from .walker import DATA_DIR, save_gait

    out = Path(out_dir) if out_dir is not None else DATA_DIR
    result = {}
    for name, tgt in DEFAULT_TARGETS.items():
        model = load_model(DATA_DIR / f"{name}.yaml")
        seed = Walker(model, Gait(alpha=np.zeros((2, DEGREE + 1)), phase_start=-0.2, phase_end=0.2,
                                  gains=DEFAULT_GAINS, name=name))
        w = design_gait(seed, tgt["speed"], tgt["step_time"], tgt["shape"])
        gait = replace(w.gait, name=name)
        save_gait(gait, out / f"{name}_gait.yaml")
        result[name] = gait
    return result
