"""Embedded Dormand-Prince 5(4) stepper with continuous extension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegratorFailure

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = B5 - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
# Shampine's dense output polynomial coefficients (as in Hairer's DOPRI5).
D = np.array(
    [
        -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
        701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class Step:
    """One accepted step [t0, t1] with its interpolant."""

    t0: float
    t1: float
    y0: np.ndarray
    y1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    rcont: tuple

    def __call__(self, t: float) -> np.ndarray:
        h = self.t1 - self.t0
        if h == 0.0:
            return self.y0.copy()
        s = (t - self.t0) / h
        r1, r2, r3, r4, r5 = self.rcont
        s1 = 1.0 - s
        return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)))


class DormandPrince:
    def __init__(self, fun, rtol=1e-8, atol=1e-9, h_min=1e-12, h_max=np.inf):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol
        self.h_min = h_min
        self.h_max = h_max

    def initial_step(self, t, y, f0, t_bound):
        scale = self.atol + np.abs(y) * self.rtol
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, t_bound - t)
        y1 = y + h0 * f0
        f1 = self.fun(t + h0, y1)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0 if h0 > 0 else 0.0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1, self.h_max, t_bound - t)

    def step(self, t, y, f0, h, t_bound):
        """Attempt steps from t until one is accepted; returns (Step, h_next)."""
        while True:
            if t + h > t_bound:
                h = t_bound - t
            if h < self.h_min and t_bound - t > self.h_min:
                raise IntegratorFailure(f"step size {h:.3e} below minimum at t={t:.9f}")
            k = [f0]
            for i in range(1, 7):
                yi = y + h * sum(a * kj for a, kj in zip(A[i], k) if a != 0.0)
                k.append(self.fun(t + C[i] * h, yi))
            y_new = y + h * (B5[0] * k[0] + B5[2] * k[2] + B5[3] * k[3] + B5[4] * k[4] + B5[5] * k[5])
            if not np.all(np.isfinite(y_new)):
                h *= 0.25
                continue
            err_vec = h * sum(e * kj for e, kj in zip(E, k) if e != 0.0)
            scale = self.atol + np.maximum(np.abs(y), np.abs(y_new)) * self.rtol
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            if err <= 1.0:
                factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
                f_new = k[6]
                ydiff = y_new - y
                bspl = h * f0 - ydiff
                rcont = (
                    y.copy(),
                    ydiff,
                    bspl,
                    ydiff - h * f_new - bspl,
                    h * sum(dj * kj for dj, kj in zip(D, k) if dj != 0.0),
                )
                st = Step(t, t + h, y.copy(), y_new, f0, f_new, rcont)
                return st, min(h * factor, self.h_max)
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)


def integrate(fun, t0, y0, t1, rtol=1e-8, atol=1e-9):
    """Plain IVP solve without events; returns y(t1)."""
    solver = DormandPrince(fun, rtol=rtol, atol=atol)
    y = np.asarray(y0, dtype=float)
    t = float(t0)
    f = fun(t, y)
    h = solver.initial_step(t, y, f, t1)
    while t < t1:
        st, h = solver.step(t, y, f, h, t1)
        t, y, f = st.t1, st.y1, st.f1
    return y
