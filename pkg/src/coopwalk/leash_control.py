"""Baseline leash force: smooth radial deadzone plus PD on the bearing angle.

The radial law is zero on the interior safe interval [r_min + w_c, r_max - w_c].
A cubic smoothstep s(w) = 3w^2 - 2w^3 ramps stiffness and damping in over the
corner width w_c just inside each boundary, so the leash can already pull
while r <= r_max:

    s_out(r) = s((r - r_max + w_c) / w_c),   P_out(r) = int_{r_max - w_c}^{r} s_out
    s_in(r)  = s((r_min + w_c - r) / w_c),   P_in(r)  = int_{r}^{r_min + w_c} s_in

    F_r = kappa * (-k_r P_out + k_r P_in - d_r (s_out + s_in) rdot)

Past the corner P_out(r) = (r - r_max) + w_c / 2; at r = r_max the pull is
kappa k_r w_c / 2, and at r = r_max + w_c + delta with zero rates
F_r = -kappa k_r (delta + 3 w_c / 2).
The torsional part is F_theta = -kappa (k_theta theta + d_theta thetadot), F_z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import R_EPS, LeashForce, LeashGeometry
from .errors import ContractViolation, DegenerateGeometry


@dataclass(frozen=True)
class LeashControllerParams:
    r_min: float = 1.25
    r_max: float = 1.75
    kappa: float = 1.0
    k_r: float = 200.0
    d_r: float = 40.0
    k_theta: float = 20.0
    d_theta: float = 5.0
    corner_width: float = 0.05

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ContractViolation("need 0 < r_min < r_max")
        for name in ("kappa", "k_r", "d_r", "k_theta", "d_theta"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be non-negative")
        if not 0 < self.corner_width < (self.r_max - self.r_min) / 2:
            raise ContractViolation("corner_width must lie in (0, (r_max - r_min)/2)")

    def with_kappa(self, kappa: float) -> "LeashControllerParams":
        from dataclasses import replace

        return replace(self, kappa=kappa)


def smoothstep(w: float) -> float:
    w = min(max(w, 0.0), 1.0)
    return w * w * (3.0 - 2.0 * w)


def smoothstep_integral(w: float) -> float:
    """int_0^w s, continued linearly (slope 1) beyond w = 1."""
    if w <= 0.0:
        return 0.0
    if w >= 1.0:
        return w - 0.5
    return w**3 - 0.5 * w**4


def radial_force(p: LeashControllerParams, r: float, rdot: float) -> float:
    wc = p.corner_width
    w_out = (r - p.r_max + wc) / wc
    w_in = (p.r_min + wc - r) / wc
    spring = -p.k_r * wc * smoothstep_integral(w_out) + p.k_r * wc * smoothstep_integral(w_in)
    damper = -p.d_r * (smoothstep(w_out) + smoothstep(w_in)) * rdot
    return p.kappa * (spring + damper)


def torsional_force(p: LeashControllerParams, theta: float, thetadot: float) -> float:
    return -p.kappa * (p.k_theta * theta + p.d_theta * thetadot)


def baseline_force(params: LeashControllerParams, geometry: LeashGeometry) -> LeashForce:
    if not geometry.r > R_EPS:
        raise DegenerateGeometry(f"leash length {geometry.r:.3e} too small")
    F_r = radial_force(params, geometry.r, geometry.rdot)
    F_t = torsional_force(params, geometry.theta, geometry.thetadot)
    return LeashForce.from_components(geometry, F_r, F_t, 0.0)


def baseline_force_vector(params: LeashControllerParams, geometry: LeashGeometry) -> np.ndarray:
    return baseline_force(params, geometry).F
