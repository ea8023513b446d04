"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints (and records for the terminal summary) one PASS/FAIL line.
"""

import math
import time

import numpy as np
import pytest

from conftest import acceptance_line, double_pendulum, pendulum
from oracles import constructed_qp, enumerate_qp, random_qp
from test_multibody import _double_pendulum_oracle, _Free
from test_poincare import ball_problem, contraction_problem

from coopwalk.contact import impact_map, stacked_jacobian
from coopwalk.hybrid import HybridGraph, SimOptions, simulate, strong_product
from coopwalk.multibody import (
    AgentState, bias_forces, dynamics_terms, kinetic_energy, mass_matrix, point_jacobian, potential_energy,
)
from coopwalk.poincare import analyze, eigen_distance, jacobian, return_map, theorem1_experiment
from coopwalk.safety.qp import QPProblem, solve_qp
from coopwalk.vc_control import output_values
from coopwalk.walker import WalkerSystem, load_walker, return_problem


def _check(number, ok, detail):
    acceptance_line(number, bool(ok), detail)
    assert ok, detail


# --------------------------------------------------------------------- 1


def test_1_strong_product_cardinality():
    t0 = time.perf_counter()
    trot = HybridGraph.cycle(tuple(range(8)))
    biped = HybridGraph.cycle(("L", "R"))
    p = strong_product(trot, biped)
    e1, e2 = set(trot.edges), set(biped.edges)
    brute = set()
    for v, w in p.vertices:
        for v2, w2 in p.vertices:
            if (v == v2 and (w, w2) in e2) or ((v, v2) in e1 and w == w2) or ((v, v2) in e1 and (w, w2) in e2):
                brute.add(((v, w), (v2, w2)))
    dt = time.perf_counter() - t0
    ok = len(p.vertices) == 16 and set(p.edges) == brute and dt < 1.0
    _check(1, ok, f"{len(p.vertices)} vertices, {len(p.edges)} edges, brute-force match {set(p.edges) == brute}, "
                  f"{dt:.3f} s")


# --------------------------------------------------------------------- 2


def test_2_dynamics_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    # pendulum: D = m l^2, H = m g l sin q
    p = pendulum(m=1.7, l=0.8)
    for q, qd in rng.uniform(-3, 3, (20, 2)):
        worst = max(worst, abs(mass_matrix(p, [q])[0, 0] - 1.7 * 0.64) / (1.7 * 0.64))
        H = 1.7 * 9.81 * 0.8 * math.sin(q)
        worst = max(worst, abs(bias_forces(p, [q], [qd])[0] - H) / max(1.0, abs(H)))
        J = point_jacobian(p, [q], p.points["tip"])[:, 0]
        Jo = 0.8 * np.array([math.cos(q), math.sin(q)])
        worst = max(worst, float(np.max(np.abs(J - Jo))) / 0.8)
    params = dict(m1=1.3, m2=0.7, l1=0.9, l2=1.1)
    model = double_pendulum(**params)
    Df, Hf, Jf = _double_pendulum_oracle(**params)
    for _ in range(50):
        q, w = rng.uniform(-math.pi, math.pi, 2), rng.uniform(-3, 3, 2)
        D, H = dynamics_terms(model, q, w)
        Do, Ho = np.array(Df(*q, *w), float), np.array(Hf(*q, *w), float).ravel()
        Jo = np.array(Jf(*q, *w), float)
        J = point_jacobian(model, q, model.points["tip"])
        worst = max(worst, np.max(np.abs(D - Do)) / np.max(np.abs(Do)),
                    np.max(np.abs(H - Ho)) / max(1.0, np.max(np.abs(Ho))), np.max(np.abs(J - Jo)) / np.max(np.abs(Jo)))
    energy_worst = 0.0
    for m in (double_pendulum(), load_walker("dog").model, load_walker("human").model):
        n = m.n_dof
        q0, qd0 = np.zeros(n), np.zeros(n)
        q0[-2:], qd0[-2:] = [0.4, -0.3], [1.0, -0.5]
        tr = simulate(_Free(m), 0, np.concatenate([q0, qd0]), 1.0, SimOptions(rtol=1e-11, atol=1e-12))

        def E(x):
            return kinetic_energy(m, x[:n], x[n:]) + potential_energy(m, x[:n])

        E0 = E(np.concatenate([q0, qd0]))
        scale = max(abs(E0), kinetic_energy(m, q0, qd0))
        energy_worst = max(energy_worst, abs(E(tr.x_final) - E0) / scale)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and energy_worst <= 1e-6 and dt < 10.0
    _check(2, ok, f"oracle rel. error {worst:.2e} (<= 1e-9), energy drift {energy_worst:.2e} (<= 1e-6), {dt:.1f} s")


# --------------------------------------------------------------------- 3


def test_3_impact_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_v, worst_dE = 0.0, -math.inf
    for name in ("dog", "human"):
        w = load_walker(name)
        for _ in range(1000):
            q = np.array([rng.uniform(-1, 1), rng.uniform(0.5, 1.2), rng.uniform(-0.3, 0.3),
                          rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)])
            qd = rng.uniform(-2.0, 2.0, 5)
            new = int(rng.integers(0, 2))
            res = impact_map(w.model, w.contacts[new], AgentState(q, qd))
            J, _ = stacked_jacobian(w.model, w.contacts[new], q)
            worst_v = max(worst_v, float(np.max(np.abs(J @ res.qdot_plus))))
            worst_dE = max(worst_dE, kinetic_energy(w.model, q, res.qdot_plus) - kinetic_energy(w.model, q, qd))
    dt = time.perf_counter() - t0
    ok = worst_v <= 1e-9 and worst_dE <= 1e-10 and dt < 10.0
    _check(3, ok, f"max |J qdot+| {worst_v:.2e}, max dKE {worst_dE:.2e} over 2x1000 impacts, {dt:.1f} s")


# --------------------------------------------------------------------- 4


def _outputs(w, x):
    return output_values(w.model, w.defs[0], AgentState(x[:5], x[5:])).y2


def _fit_rate(t, Y):
    """Shared rate lam in y_i(t) = (a_i + b_i t) exp(-lam t), by a scan over lam."""
    best = (math.inf, None)
    for lam in np.arange(1.0, 40.0, 0.01):
        e = np.exp(-lam * t)
        basis = np.column_stack([e, t * e])
        coef, *_ = np.linalg.lstsq(basis, Y, rcond=None)
        res = float(np.sum((basis @ coef - Y) ** 2))
        if res < best[0]:
            best = (res, lam)
    return best[1]


def test_4_virtual_constraint_closed_loop():
    t0 = time.perf_counter()
    dog = load_walker("dog")
    opts = SimOptions(rtol=1e-10, atol=1e-12, h_max=0.002)
    # start inside the phase window, off the zero-dynamics manifold
    x0 = simulate(WalkerSystem(dog), 0, dog.gait.fixed_point, 0.08, opts).x_final.copy()
    x0[2] += 0.03  # pitch
    x0[4] += 0.02  # swing leg
    x0[5:] += np.array([0.05, 0.0, -0.2, 0.3, 0.1])
    tr = simulate(WalkerSystem(dog), 0, x0, 0.3, opts, stop=lambda ev, traj: True)
    ts, xs = tr.segments[0].arrays()
    Y = np.array([_outputs(dog, x) for x in xs])
    lam = _fit_rate(ts - ts[0], Y)
    kp, kd = dog.gait.gains.kp, dog.gait.gains.kd
    pole = kd / 2.0
    assert kp == pytest.approx(pole**2)  # double pole
    rate_err = abs(lam - pole) / pole
    # constant external force at the head: output trajectory unchanged
    forced = WalkerSystem(dog, "head", force=[25.0, -15.0])
    diff = 0.0
    for T in (0.1, 0.2, 0.3):
        a = simulate(WalkerSystem(dog), 0, x0, T, opts)
        b = simulate(forced, 0, x0, T, opts)
        assert not a.events and not b.events
        diff = max(diff, float(np.max(np.abs(_outputs(dog, a.x_final) - _outputs(dog, b.x_final)))))
    dt = time.perf_counter() - t0
    ok = rate_err <= 0.25 and diff <= 1e-7 and dt < 30.0
    _check(4, ok, f"fitted rate {lam:.2f} vs pole {pole:.2f} ({100 * rate_err:.1f}% off), "
                  f"forced-vs-free output gap {diff:.1e}, {dt:.1f} s")


# --------------------------------------------------------------------- 5


def test_5_qp_solver_against_enumeration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst_obj, worst_kkt = 0.0, 0.0
    max_rows = 0
    for i in range(500):
        if i % 2 == 0:
            H, g, A, b, _, _ = random_qp(rng, n_max=20, m_max=12)
        else:
            H, g, A, b, _, _ = constructed_qp(rng, n_max=20, m_max=30)
        max_rows = max(max_rows, A.shape[0])
        _, f_o = enumerate_qp(H, g, A, b)
        res = solve_qp(QPProblem(H, g, A, b))
        rep = res.report
        worst_obj = max(worst_obj, abs(rep.objective - f_o) / max(1.0, abs(f_o)))
        worst_kkt = max(worst_kkt, rep.stationarity, rep.primal_infeasibility, rep.complementarity,
                        rep.dual_infeasibility)
    dt = time.perf_counter() - t0
    ok = worst_obj <= 1e-6 and worst_kkt <= 1e-8 and dt < 60.0
    _check(5, ok, f"500 QPs (<= 20 vars, <= {max_rows} rows): objective gap {worst_obj:.1e}, "
                  f"KKT residual {worst_kkt:.1e}, {dt:.1f} s")


# --------------------------------------------------------------------- 6


def test_6_safety_battery_and_transparency(tmp_path):
    from coopwalk.scenario import bundled_config, parse_config, run_scenario

    t0 = time.perf_counter()
    cfg = bundled_config("battery")
    s = run_scenario(cfg, tmp_path / "battery").summary
    rows = s["placements"]
    violated = [r for r in rows if r["min_h_unfiltered"] < 0]
    safe = [r for r in violated if r["min_h_filtered"] >= -1e-6 and r["failure"] is None]
    free = parse_config("version: 1\nname: free\npipeline: filtered\nhorizon: 3.0\nspeed_window: 1.0\n")
    fs = run_scenario(free, tmp_path / "free").summary
    dev = fs["safety"]["max_deviation_when_slack"]
    dt = time.perf_counter() - t0
    ok = len(violated) >= 20 and len(safe) == len(violated) and dev <= 1e-8 and fs["completed"] and dt < 600
    _check(6, ok, f"{len(violated)} placements unsafe unfiltered, {len(safe)} safe and upright filtered "
                  f"(min h {s['min_h_filtered']:.4f}); obstacle-free deviation {dev:.1e}, {dt:.0f} s")


# --------------------------------------------------------------------- 7


def test_7_kappa_sweep():
    from coopwalk.complex import complex_return_problem, section_guess
    from coopwalk.scenario import build_pair, bundled_config

    t0 = time.perf_counter()
    pair = build_pair(bundled_config("poincare"))
    grid = np.linspace(0.0, 0.1, 21)
    table = theorem1_experiment(lambda k: complex_return_problem(pair.with_kappa(k)), grid, section_guess(pair))
    r0 = table.rows[0]
    # the kappa = 0 spectrum is the union of the agents' own spectra
    agent_eigs = []
    for w in pair.walkers:
        agent_eigs.append(analyze(return_problem(w), w.chart(w.gait.fixed_point)).eigenvalues)
    product_gap = eigen_distance(r0.eigenvalues, np.concatenate(agent_eigs))
    stable = [r for r in table.rows if r.verdict == "stable" and r.residual <= 1e-9]
    jump = table.max_eigen_jump()
    dt = time.perf_counter() - t0
    ok = (r0.residual <= 1e-9 and r0.spectral_radius < 1.0 and len(stable) == len(grid) and jump <= 0.1
          and product_gap <= 1e-4 and dt < 900)
    _check(7, ok, f"kappa=0 residual {r0.residual:.1e}, rho {r0.spectral_radius:.4f}, product-spectrum gap "
                  f"{product_gap:.1e}; {len(stable)}/{len(grid)} stable on [0, 0.1], rho "
                  f"{table.rows[-1].spectral_radius:.4f} at 0.1, max eigen jump {jump:.4f}, {dt:.0f} s")


# --------------------------------------------------------------------- 8


def test_8_leashed_coordination(tmp_path):
    from coopwalk.scenario import bundled_config, run_scenario

    t0 = time.perf_counter()
    lc, uc = bundled_config("leashed"), bundled_config("unleashed")
    pair_speeds = (load_walker("dog").gait.speed, load_walker("human").gait.speed)
    ls = run_scenario(lc, tmp_path / "leashed").summary
    us = run_scenario(uc, tmp_path / "unleashed").summary
    dt = time.perf_counter() - t0
    ok = (pair_speeds[0] > pair_speeds[1] and ls["completed"] and us["completed"]
          and ls["relative_speed_gap"] <= 0.01 and ls["leash"]["in_band_tail"]
          and us["relative_speed_gap"] > 0.01 and dt < 300)
    _check(8, ok, f"leashed gap {100 * ls['relative_speed_gap']:.2f}% with r in "
                  f"[{ls['leash']['r_min_tail']:.3f}, {ls['leash']['r_max_tail']:.3f}]; unleashed gap "
                  f"{100 * us['relative_speed_gap']:.2f}%, {dt:.0f} s")


# --------------------------------------------------------------------- 9


def test_9_poincare_oracles():
    t0 = time.perf_counter()
    errs = []
    ball = ball_problem(0.8)
    for h in (0.5, 1.0, 2.0):
        errs.append(abs(return_map(ball, [h]).x_next[0] - 0.64 * h))
    errs.append(abs(jacobian(ball, [1.0])[0, 0] - 0.64))
    con = contraction_problem()
    rep = analyze(con, [0.0])
    errs += [abs(rep.fixed_point[0] - 2.0), abs(rep.jacobian[0, 0] - 0.5)]
    for c in (-1.0, 3.0):
        errs.append(abs(return_map(con, [c]).x_next[0] - (0.5 * c + 1.0)))
    worst = max(errs)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 10.0
    _check(9, ok, f"max error vs closed form {worst:.1e} (maps and Jacobians), {dt:.2f} s")
