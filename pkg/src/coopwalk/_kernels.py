"""Compiled kinematics/dynamics sweeps for planar trees (numba)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PLANAR, PLANAR_TRANSLATION, REVOLUTE, PRISMATIC = 0, 1, 2, 3
TYPE_CODES = {"planar": PLANAR, "planar-translation": PLANAR_TRANSLATION, "revolute": REVOLUTE, "prismatic": PRISMATIC}


@njit(cache=True)
def frames(jtype, parent, qstart, origin, axis, q, qd):
    """Per-link origin position/velocity/bias-acceleration, angle, rate and Jacobians."""
    nl = jtype.shape[0]
    n = q.shape[0]
    o = np.zeros((nl, 2))
    v = np.zeros((nl, 2))
    a = np.zeros((nl, 2))
    phi = np.zeros(nl)
    w = np.zeros(nl)
    jo = np.zeros((nl, 2, n))
    jw = np.zeros((nl, n))
    for i in range(nl):
        t = jtype[i]
        k = qstart[i]
        p = parent[i]
        if p < 0:
            o[i, 0] = origin[i, 0]
            o[i, 1] = origin[i, 1]
            if t == PLANAR:
                o[i, 0] = q[k]
                o[i, 1] = q[k + 1]
                phi[i] = q[k + 2]
                v[i, 0] = qd[k]
                v[i, 1] = qd[k + 1]
                w[i] = qd[k + 2]
                jo[i, 0, k] = 1.0
                jo[i, 1, k + 1] = 1.0
                jw[i, k + 2] = 1.0
            elif t == PLANAR_TRANSLATION:
                o[i, 0] = q[k]
                o[i, 1] = q[k + 1]
                v[i, 0] = qd[k]
                v[i, 1] = qd[k + 1]
                jo[i, 0, k] = 1.0
                jo[i, 1, k + 1] = 1.0
            elif t == REVOLUTE:
                phi[i] = q[k]
                w[i] = qd[k]
                jw[i, k] = 1.0
            else:
                ax, az = axis[i, 0], axis[i, 1]
                o[i, 0] += ax * q[k]
                o[i, 1] += az * q[k]
                v[i, 0] = ax * qd[k]
                v[i, 1] = az * qd[k]
                jo[i, 0, k] = ax
                jo[i, 1, k] = az
            continue
        php = phi[p]
        wp = w[p]
        c, s = math.cos(php), math.sin(php)
        dx, dz = origin[i, 0], origin[i, 1]
        for j in range(n):
            jw[i, j] = jw[p, j]
        if t == REVOLUTE:
            rx = c * dx - s * dz
            rz = s * dx + c * dz
            phi[i] = php + q[k]
            w[i] = wp + qd[k]
            jw[i, k] += 1.0
            v[i, 0] = v[p, 0] - wp * rz
            v[i, 1] = v[p, 1] + wp * rx
            a[i, 0] = a[p, 0] - wp * wp * rx
            a[i, 1] = a[p, 1] - wp * wp * rz
            for j in range(n):
                jo[i, 0, j] = jo[p, 0, j] - jw[p, j] * rz
                jo[i, 1, j] = jo[p, 1, j] + jw[p, j] * rx
        else:
            ux, uz = axis[i, 0], axis[i, 1]
            ex = c * ux - s * uz
            ez = s * ux + c * uz
            rx = c * dx - s * dz + ex * q[k]
            rz = s * dx + c * dz + ez * q[k]
            phi[i] = php
            w[i] = wp
            v[i, 0] = v[p, 0] - wp * rz + ex * qd[k]
            v[i, 1] = v[p, 1] + wp * rx + ez * qd[k]
            a[i, 0] = a[p, 0] - wp * wp * rx - 2.0 * wp * ez * qd[k]
            a[i, 1] = a[p, 1] - wp * wp * rz + 2.0 * wp * ex * qd[k]
            for j in range(n):
                jo[i, 0, j] = jo[p, 0, j] - jw[p, j] * rz
                jo[i, 1, j] = jo[p, 1, j] + jw[p, j] * rx
            jo[i, 0, k] += ex
            jo[i, 1, k] += ez
        o[i, 0] = o[p, 0] + rx
        o[i, 1] = o[p, 1] + rz
    return o, v, a, phi, w, jo, jw


@njit(cache=True)
def point(o, v, a, phi, w, jo, jw, link, bx, bz):
    """Position, 2 x n Jacobian, velocity and bias acceleration of a body point."""
    c, s = math.cos(phi[link]), math.sin(phi[link])
    rx = c * bx - s * bz
    rz = s * bx + c * bz
    n = jw.shape[1]
    pos = np.empty(2)
    pos[0] = o[link, 0] + rx
    pos[1] = o[link, 1] + rz
    jac = np.empty((2, n))
    for j in range(n):
        jac[0, j] = jo[link, 0, j] - jw[link, j] * rz
        jac[1, j] = jo[link, 1, j] + jw[link, j] * rx
    wl = w[link]
    vel = np.empty(2)
    vel[0] = v[link, 0] - wl * rz
    vel[1] = v[link, 1] + wl * rx
    acc = np.empty(2)
    acc[0] = a[link, 0] - wl * wl * rx
    acc[1] = a[link, 1] - wl * wl * rz
    return pos, jac, vel, acc


@njit(cache=True)
def assemble(o, v, a, phi, w, jo, jw, mass, com, inertia, gx, gz):
    """D = sum m Jc^T Jc + I Jw^T Jw;  H = sum m Jc^T (dJc qdot - g)."""
    nl = mass.shape[0]
    n = jw.shape[1]
    d = np.zeros((n, n))
    h = np.zeros(n)
    for i in range(nl):
        _, jc, _, acc = point(o, v, a, phi, w, jo, jw, i, com[i, 0], com[i, 1])
        m = mass[i]
        for r in range(n):
            h[r] += m * (jc[0, r] * (acc[0] - gx) + jc[1, r] * (acc[1] - gz))
            for cidx in range(n):
                d[r, cidx] += m * (jc[0, r] * jc[0, cidx] + jc[1, r] * jc[1, cidx]) + inertia[i] * jw[i, r] * jw[i, cidx]
    return d, h


@njit(cache=True)
def _bernstein(m, s):
    out = np.empty(m + 1)
    for k in range(m + 1):
        c = 1.0
        for j in range(k):
            c = c * (m - j) / (j + 1)
        out[k] = c * s**k * (1.0 - s) ** (m - k)
    return out


@njit(cache=True)
def bezier3(alpha, s):
    """Value, first and second derivative of a vector Bezier polynomial."""
    r, mp1 = alpha.shape
    m = mp1 - 1
    b = alpha @ _bernstein(m, s)
    d1 = np.zeros(r)
    d2 = np.zeros(r)
    if m >= 1:
        da = alpha[:, 1:] - alpha[:, :-1]
        d1 = m * (da @ _bernstein(m - 1, s))
    if m >= 2:
        dda = alpha[:, 2:] - 2.0 * alpha[:, 1:-1] + alpha[:, :-2]
        d2 = m * (m - 1) * (dda @ _bernstein(m - 2, s))
    return b, d1, d2


@njit(cache=True)
def walker_terms(jtype, parent, qstart, origin, axis, mass, com, inertia, gx, gz, q, qd,
                 st_link, st_bx, st_bz, C2, alpha, s0, s1, ibase):
    """Stance-constrained dynamics as an affine map of tau plus phase-based outputs.

    Returns drift, K, lam_drift, L (qdd = drift + K tau, lam = lam_drift + L tau),
    Phi, zeta (y2ddot = Phi qdd + zeta), y2, y2dot, s.
    """
    o, v, a, phi, w, jo, jw = frames(jtype, parent, qstart, origin, axis, q, qd)
    d, h = assemble(o, v, a, phi, w, jo, jw, mass, com, inertia, gx, gz)
    pos, jac, vel, acc = point(o, v, a, phi, w, jo, jw, st_link, st_bx, st_bz)
    n = q.shape[0]
    kkt = np.zeros((n + 2, n + 2))
    for i in range(n):
        for j in range(n):
            kkt[i, j] = 0.5 * (d[i, j] + d[j, i])
        for r in range(2):
            kkt[i, n + r] = -jac[r, i]
            kkt[n + r, i] = jac[r, i]
    rhs = np.zeros((n + 2, n + 1))
    for i in range(n):
        rhs[i, 0] = -h[i]
        rhs[i, 1 + i] = 1.0
    rhs[n, 0] = -acc[0]
    rhs[n + 1, 0] = -acc[1]
    sol = np.linalg.solve(kkt, rhs)
    drift = sol[:n, 0].copy()
    K = sol[:n, 1:].copy()
    lam_drift = sol[n:, 0].copy()
    L = sol[n:, 1:].copy()
    span = s1 - s0
    grad = -jac[0] / span
    grad[ibase] += 1.0 / span
    s = (q[ibase] - pos[0] - s0) / span
    sdot = grad @ qd
    curv = -acc[0] / span
    if s < 0.0 or s > 1.0:
        sc = min(max(s, 0.0), 1.0)
        b, d1, d2 = bezier3(alpha, sc)
        d1[:] = 0.0
        d2[:] = 0.0
    else:
        b, d1, d2 = bezier3(alpha, s)
    y2 = C2 @ q - b
    y2dot = C2 @ qd - d1 * sdot
    Phi = C2 - np.outer(d1, grad)
    zeta = -d2 * sdot * sdot - d1 * curv
    return drift, K, lam_drift, L, Phi, zeta, y2, y2dot, s


@njit(cache=True)
def walker_terms_point(jtype, parent, qstart, origin, axis, mass, com, inertia, gx, gz, q, qd,
                       st_link, st_bx, st_bz, C2, alpha, s0, s1, ibase, pt_link, pt_bx, pt_bz):
    """walker_terms plus position, Jacobian and velocity of one more body point."""
    drift, K, lam_drift, L, Phi, zeta, y2, y2dot, s = walker_terms(
        jtype, parent, qstart, origin, axis, mass, com, inertia, gx, gz, q, qd,
        st_link, st_bx, st_bz, C2, alpha, s0, s1, ibase)
    o, v, a, phi, w, jo, jw = frames(jtype, parent, qstart, origin, axis, q, qd)
    pos, jac, vel, acc = point(o, v, a, phi, w, jo, jw, pt_link, pt_bx, pt_bz)
    return drift, K, lam_drift, L, Phi, zeta, y2, y2dot, s, pos, jac, vel


@njit(cache=True)
def _smooth(w):
    if w <= 0.0:
        return 0.0
    if w >= 1.0:
        return 1.0
    return w * w * (3.0 - 2.0 * w)


@njit(cache=True)
def _smooth_int(w):
    if w <= 0.0:
        return 0.0
    if w >= 1.0:
        return w - 0.5
    return w**3 - 0.5 * w**4


@njit(cache=True)
def leash_force(lp, bx, by, vx, vy):
    """Baseline leash force on the hand from b = p_head - p_hand and its rate.

    lp = [r_min, r_max, kappa, k_r, d_r, k_theta, d_theta, corner_width].
    Returns F (3,), r, theta, rdot, thetadot.
    """
    r = math.sqrt(bx * bx + by * by)
    th = math.atan2(by, bx)
    rdot = (bx * vx + by * vy) / r
    thdot = (bx * vy - by * vx) / (r * r)
    r_min, r_max, kappa, k_r, d_r, k_t, d_t, wc = lp[0], lp[1], lp[2], lp[3], lp[4], lp[5], lp[6], lp[7]
    w_out = (r - r_max + wc) / wc
    w_in = (r_min + wc - r) / wc
    f_r = kappa * (-k_r * wc * _smooth_int(w_out) + k_r * wc * _smooth_int(w_in)
                   - d_r * (_smooth(w_out) + _smooth(w_in)) * rdot)
    f_t = -kappa * (k_t * th + d_t * thdot)
    c, s = math.cos(th), math.sin(th)
    F = np.empty(3)
    F[0] = -f_r * c + f_t * s
    F[1] = -f_r * s - f_t * c
    F[2] = 0.0
    return F, r, th, rdot, thdot


@njit(cache=True)
def ground_embed(pos, jac, vel, xb, xbd, X, Y, psi):
    """Ground-plane position, 3 x n Jacobian, psidot = 0 velocity and lever d p / d psi."""
    c, s = math.cos(psi), math.sin(psi)
    lever = pos[0] - xb
    n = jac.shape[1]
    p = np.empty(3)
    p[0] = X + lever * c
    p[1] = Y + lever * s
    p[2] = pos[1]
    J = np.empty((3, n))
    for j in range(n):
        J[0, j] = c * jac[0, j]
        J[1, j] = s * jac[0, j]
        J[2, j] = jac[1, j]
    v = np.empty(3)
    v[0] = c * vel[0]
    v[1] = s * vel[0]
    v[2] = vel[1]
    lv = np.empty(3)
    lv[0] = -lever * s
    lv[1] = lever * c
    lv[2] = 0.0
    return p, J, v, lv


@njit(cache=True)
def leash_loop(lp, hp, p_head, v_head, l_head, psi_d, Y_d, p_hand, v_hand, l_hand, psi_h, Y_h, held, F_held):
    """Heading rates and leash force.

    hp = [k_psi, k_Y, M_d v_d, M_h v_h, k_psi_h, k_Y_h]. omega = c0 + Bw F. With held = False,
    F = F_b(geometry(omega)) is solved jointly with omega (both relations are
    affine); otherwise F = F_held.
    Returns omega (2,), F (3,), F_b (3,), r, theta, rdot, thetadot.
    """
    Bw = np.zeros((2, 3))
    Bw[0, 0] = math.sin(psi_d) / hp[2]
    Bw[0, 1] = -math.cos(psi_d) / hp[2]
    Bw[1, 0] = -math.sin(psi_h) / hp[3]
    Bw[1, 1] = math.cos(psi_h) / hp[3]
    c0 = np.zeros(2)
    c0[0] = -hp[0] * psi_d - hp[1] * Y_d
    c0[1] = -hp[4] * psi_h - hp[5] * Y_h
    bx = p_head[0] - p_hand[0]
    by = p_head[1] - p_hand[1]
    if held:
        omega = c0 + Bw @ F_held
        vx = v_head[0] + l_head[0] * omega[0] - v_hand[0] - l_hand[0] * omega[1]
        vy = v_head[1] + l_head[1] * omega[0] - v_hand[1] - l_hand[1] * omega[1]
        Fb, r, th, rdot, thdot = leash_force(lp, bx, by, vx, vy)
        if lp[2] == 0.0:
            Fb[:] = 0.0
        return omega, F_held.copy(), Fb, r, th, rdot, thdot
    vx0 = v_head[0] - v_hand[0]
    vy0 = v_head[1] - v_hand[1]
    F0, r, th, rdot, thdot = leash_force(lp, bx, by, vx0, vy0)
    if lp[2] == 0.0:
        F0[:] = 0.0
        return c0, F0, F0.copy(), r, th, rdot, thdot
    G = np.empty((3, 2))
    Fa, _, _, _, _ = leash_force(lp, bx, by, vx0 + l_head[0], vy0 + l_head[1])
    Fh, _, _, _, _ = leash_force(lp, bx, by, vx0 - l_hand[0], vy0 - l_hand[1])
    for i in range(3):
        G[i, 0] = Fa[i] - F0[i]
        G[i, 1] = Fh[i] - F0[i]
    M = np.eye(2) - Bw @ G
    omega = np.linalg.solve(M, c0 + Bw @ F0)
    vx = vx0 + l_head[0] * omega[0] - l_hand[0] * omega[1]
    vy = vy0 + l_head[1] * omega[0] - l_hand[1] * omega[1]
    F, r, th, rdot, thdot = leash_force(lp, bx, by, vx, vy)
    return omega, F, F.copy(), r, th, rdot, thdot
