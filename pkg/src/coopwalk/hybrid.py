"""Directed-cycle hybrid automata, strong products, and event-driven simulation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from .errors import ContractViolation, GuardStall
from .integrate import DormandPrince

# -- graphs ------------------------------------------------------------------


@dataclass(frozen=True)
class HybridGraph:
    vertices: tuple
    edges: frozenset

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", frozenset(self.edges))
        vs = set(self.vertices)
        for a, b in self.edges:
            if a not in vs or b not in vs:
                raise ContractViolation(f"edge ({a!r}, {b!r}) uses an unknown vertex")

    @classmethod
    def cycle(cls, vertices: Sequence) -> "HybridGraph":
        """Directed cycle v0 -> v1 -> ... -> v0 (a single vertex gets a self-loop)."""
        vs = tuple(vertices)
        return cls(vs, frozenset((vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))))

    def is_directed_cycle(self) -> bool:
        n = len(self.vertices)
        if n == 0 or len(self.edges) != n:
            return False
        succ = {}
        for a, b in self.edges:
            if a in succ:
                return False
            succ[a] = b
        if set(succ) != set(self.vertices):
            return False
        v, seen = self.vertices[0], set()
        for _ in range(n):
            seen.add(v)
            v = succ[v]
        return v == self.vertices[0] and len(seen) == n

    def next_domain(self, v):
        """mu(v) for directed cycles."""
        out = [b for a, b in self.edges if a == v]
        if len(out) != 1:
            raise ContractViolation(f"vertex {v!r} has {len(out)} successors; mu undefined")
        return out[0]

    def successors(self, v) -> list:
        return sorted((b for a, b in self.edges if a == v), key=repr)


def strong_product(g1: HybridGraph, g2: HybridGraph) -> HybridGraph:
    """G1 boxtimes G2 over vertex pairs (v, w).

    (v, w) -> (v', w') iff  v == v' and w -> w',  or  v -> v' and w == w',
    or  v -> v' and w -> w'.
    """
    verts = tuple(product(g1.vertices, g2.vertices))
    s1 = {}
    for a, b in g1.edges:
        s1.setdefault(a, []).append(b)
    s2 = {}
    for a, b in g2.edges:
        s2.setdefault(a, []).append(b)
    edges = set()
    for v, w in verts:
        for w2 in s2.get(w, ()):
            edges.add(((v, w), (v, w2)))
        for v2 in s1.get(v, ()):
            edges.add(((v, w), (v2, w)))
            for w2 in s2.get(w, ()):
                edges.add(((v, w), (v2, w2)))
    return HybridGraph(verts, frozenset(edges))


# -- simulation ----------------------------------------------------------------


@dataclass
class Guard:
    """Event surface of one edge. The domain interior is `fn > 0`; the event fires
    when fn decreases through zero while `armed` (if given) holds."""

    name: str
    fn: Callable[[float, np.ndarray], float]
    fire: Callable[[Any, float, np.ndarray], tuple[Any, np.ndarray, Any]]
    armed: Callable[[float, np.ndarray], bool] | None = None
    terminal: bool = False


class HybridSystem:
    """Interface for `simulate`. Subclasses override the hooks they need."""

    def flow(self, mode, t: float, x: np.ndarray, hold) -> np.ndarray:
        raise NotImplementedError

    def guards(self, mode) -> Sequence[Guard]:
        return ()

    def check(self, mode, t: float, x: np.ndarray) -> str | None:
        """Return a failure cause to terminate the run (e.g. a fall)."""
        return None

    def sample(self, mode, t: float, x: np.ndarray, hold):
        """Zero-order-hold update at control instants; returns the new hold."""
        return hold


@dataclass(frozen=True)
class SimOptions:
    rtol: float = 1e-8
    atol: float = 1e-9
    h_max: float = 0.05
    h_min: float = 1e-12
    event_tol: float = 1e-10
    stall_rate: float = 1e-8
    sample_period: float | None = None
    max_events: int = 10_000
    record: bool = True


@dataclass
class Segment:
    mode: Hashable
    t: list
    x: list

    def arrays(self):
        return np.asarray(self.t), np.asarray(self.x)


@dataclass
class Event:
    t: float
    edge: Any
    guard: str
    x_minus: np.ndarray
    x_plus: np.ndarray
    mode_minus: Hashable
    mode_plus: Hashable
    guard_rate: float


@dataclass
class HybridTrajectory:
    segments: list = field(default_factory=list)
    events: list = field(default_factory=list)
    t_final: float = 0.0
    x_final: np.ndarray | None = None
    mode_final: Hashable = None
    failure: str | None = None
    terminated_by: str | None = None
    hold_final: Any = None

    def samples(self):
        """Concatenated (t, mode, x) samples in time order."""
        out = []
        for seg in self.segments:
            for t, x in zip(seg.t, seg.x):
                out.append((t, seg.mode, x))
        return out

    def to_csv(self, labels: Sequence[str] | None = None) -> str:
        """One row per sample: t, domain, then state components."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        n = len(self.segments[0].x[0]) if self.segments and self.segments[0].x else 0
        labels = list(labels) if labels is not None else [f"x{i}" for i in range(n)]
        w.writerow(["t", "domain", *labels])
        for t, mode, x in self.samples():
            w.writerow([repr(float(t)), _mode_str(mode), *(repr(float(v)) for v in x)])
        return buf.getvalue()

    def events_json(self) -> list:
        return [
            {
                "t": float(e.t),
                "guard": e.guard,
                "edge": [_mode_str(a) for a in e.edge] if isinstance(e.edge, tuple) else _mode_str(e.edge),
                "from": _mode_str(e.mode_minus),
                "to": _mode_str(e.mode_plus),
                "guard_rate": float(e.guard_rate),
                "x_minus": [float(v) for v in e.x_minus],
                "x_plus": [float(v) for v in e.x_plus],
            }
            for e in self.events
        ]

    def write(self, csv_path, json_path, labels=None):
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv(labels))
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"events": self.events_json(), "failure": self.failure}, fh, sort_keys=True, indent=2)


def _mode_str(mode) -> str:
    if isinstance(mode, tuple):
        return "|".join(_mode_str(m) for m in mode)
    return str(mode)


def _locate(fn, tri, lo, hi, g_lo, g_hi, tol):
    """Root of g(t) = fn(t, x(t)) bracketed by lo (g > 0) and hi (g <= 0).

    Alternates Illinois false-position and bisection steps until the bracket is
    below `tol`, then returns the secant point inside the final bracket.
    """
    last = 0
    tl, th = g_lo, g_hi  # unscaled values for the final secant
    for it in range(400):
        if hi - lo <= tol:
            break
        if it % 2:
            t = 0.5 * (lo + hi)
        else:
            t = lo - g_lo * (hi - lo) / (g_hi - g_lo)
            if not lo < t < hi:
                t = 0.5 * (lo + hi)
        g = fn(t, tri(t))
        if g > 0.0:
            lo, g_lo, tl = t, g, g
            if last == 1:
                g_hi *= 0.5
            last = 1
        else:
            hi, g_hi, th = t, g, g
            if last == -1:
                g_lo *= 0.5
            last = -1
    if th == tl:
        return hi
    return lo - tl * (hi - lo) / (th - tl)


def simulate(system: HybridSystem, mode0, x0, t_end: float, opts: SimOptions = SimOptions(),
             t0: float = 0.0, hold0=None, stop: Callable | None = None) -> HybridTrajectory:
    """Integrate the closed-loop hybrid system from (mode0, x0) until t_end.

    `stop(event, traj)` may return True to end the run right after an event
    (used by return maps). Failures reported by `system.check` end the run with
    `traj.failure` set.
    """
    if not t_end > t0:
        raise ContractViolation("t_end must exceed the start time")
    x = np.asarray(x0, dtype=float).copy()
    t = float(t0)
    mode = mode0
    hold = hold0
    for g in system.guards(mode):
        if g.fn(t, x) <= 0.0 and (g.armed is None or g.armed(t, x)):
            raise ContractViolation(f"initial state not inside domain {mode!r} (guard {g.name})")
    traj = HybridTrajectory()
    period = opts.sample_period
    next_sample = t if period else math.inf
    sample_k = 0

    def new_segment():
        seg = Segment(mode, [t], [x.copy()])
        traj.segments.append(seg)
        return seg

    seg = new_segment()
    n_events = 0
    while t < t_end:
        if period and t >= next_sample - 1e-12:
            hold = system.sample(mode, t, x, hold)
            sample_k += 1
            next_sample = t0 + sample_k * period
        t_bound = min(t_end, next_sample)
        cur_mode, cur_hold = mode, hold

        def fun(tt, xx):
            return system.flow(cur_mode, tt, xx, cur_hold)

        solver = DormandPrince(fun, rtol=opts.rtol, atol=opts.atol, h_min=opts.h_min, h_max=opts.h_max)
        f = fun(t, x)
        h = solver.initial_step(t, x, f, t_bound)
        guards = list(system.guards(mode))
        g_vals = [g.fn(t, x) for g in guards]
        fired = None
        while t < t_bound:
            st, h = solver.step(t, x, f, h, t_bound)
            # guard scan at the step end
            hits = []
            for gi, g in enumerate(guards):
                g1 = g.fn(st.t1, st.y1)
                if g1 <= 0.0 and g_vals[gi] > 0.0:
                    te = _locate(g.fn, st, st.t0, st.t1, g_vals[gi], g1, opts.event_tol)
                    xe = st(te)
                    if g.armed is None or g.armed(te, xe):
                        hits.append((te, gi, xe))
            if hits:
                hits.sort(key=lambda h_: (h_[0], h_[1]))
                te0 = hits[0][0]
                simultaneous = [hh for hh in hits if hh[0] - te0 <= opts.event_tol]
                fired = simultaneous
                t, x = te0, simultaneous[0][2]
                if opts.record:
                    seg.t.append(t)
                    seg.x.append(x.copy())
                # rate at the crossing for transversality
                rates = []
                for te, gi, xe in simultaneous:
                    dt = max(1e-7, 1e-4 * (st.t1 - st.t0))
                    ta, tb = max(st.t0, te - dt), min(st.t1, te + dt)
                    rate = (guards[gi].fn(tb, st(tb)) - guards[gi].fn(ta, st(ta))) / (tb - ta) if tb > ta else 0.0
                    if abs(rate) < opts.stall_rate:
                        raise GuardStall(f"guard {guards[gi].name} crossed with rate {rate:.3e} at t={te:.9f}")
                    rates.append(rate)
                break
            t, x, f = st.t1, st.y1, st.f1
            g_vals = [g.fn(t, x) for g in guards]
            if opts.record:
                seg.t.append(t)
                seg.x.append(x.copy())
            cause = system.check(mode, t, x)
            if cause:
                traj.failure = cause
                return _finish(traj, t, x, mode, hold)
        if fired is None:
            continue
        # apply resets in guard order (dog before human for products); later
        # simultaneous guards are looked up again in the post-reset mode
        stop_now = False
        for k, ((te, gi, _), rate) in enumerate(zip(fired, rates)):
            g = guards[gi]
            if k > 0:
                current = {gg.name: gg for gg in system.guards(mode)}
                if g.name not in current:
                    continue
                g = current[g.name]
            m_minus, x_minus = mode, x.copy()
            mode, x, edge = g.fire(mode, t, x)
            x = np.asarray(x, dtype=float)
            ev = Event(t, edge, g.name, x_minus, x.copy(), m_minus, mode, rate)
            traj.events.append(ev)
            n_events += 1
            if g.terminal:
                traj.terminated_by = g.name
                stop_now = True
            if stop is not None and stop(ev, traj):
                stop_now = True
        if n_events >= opts.max_events:
            traj.failure = "max_events"
            return _finish(traj, t, x, mode, hold)
        cause = system.check(mode, t, x)
        if cause:
            traj.failure = cause
            return _finish(traj, t, x, mode, hold)
        if stop_now:
            return _finish(traj, t, x, mode, hold)
        seg = new_segment()
    return _finish(traj, t, x, mode, hold)


def _finish(traj, t, x, mode, hold):
    traj.t_final = t
    traj.x_final = np.asarray(x).copy()
    traj.mode_final = mode
    traj.hold_final = hold
    return traj
