"""Scenario orchestration: configuration, experiment pipelines, artifacts.

A scenario document (YAML, mandatory `version`) selects the agent models and
gaits, the leash and heading laws, the safety filter and obstacles, the
horizon and the output directory. Pipelines:

    unleashed  both agents walk with kappa = 0
    leashed    baseline leash law, continuous
    filtered   leash + sampled ECBF-QP safety filter
    battery    randomized obstacle placements, paired unfiltered/filtered runs

Artifacts (all deterministic for a given config and seed):

    trajectory.csv  complex state per sample
    com.csv         tidy ground-plane COM traces (t, agent, x, y)
    leash.csv       leash geometry (t, r, theta)
    events.json     hybrid transitions
    safety.json     filter statistics and safety events
    summary.json    RunSummary (sorted keys)
    timing.json     wall-clock statistics (excluded from reproducibility)
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .complex import (
    AGENT_NAMES, DOG, GUARD_NAMES, HUMAN, ComplexSystem, HeadingParams, LeashedPair, agent_state_labels,
    complex_return_problem, evaluate, ground_com, place_pair, section_guess,
)
from .config import dump_document, dump_json, parse_document
from .errors import ConfigError, ContractViolation, CoopwalkError, SchemaMismatch
from .hybrid import SimOptions, simulate
from .leash_control import LeashControllerParams
from .multibody import load_model
from .poincare import analyze, theorem1_experiment
from .safety.ecbf import CriticalPoints, EcbfParams, ObstacleField, min_barrier
from .safety.filter import SafetyFilter, SafetyParams
from .walker import DATA_DIR, Walker, load_gait

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
SUMMARY_SCHEMA = 1
PIPELINES = ("unleashed", "leashed", "filtered", "battery")
BUNDLED = "bundled:"


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class ModelRefs:
    dog_model: str = "bundled:dog"
    dog_gait: str = "bundled:dog_gait"
    human_model: str = "bundled:human"
    human_gait: str = "bundled:human_gait"


@dataclass(frozen=True)
class SafetySection:
    obstacles: tuple = ()
    h_min: float = 0.3
    pole_lambda: float = 5.0
    pole_omega: float = 5.0
    F_max: float = 200.0
    u_max: tuple | None = None
    control_rate: float = 1000.0
    slack_weight: float = 1e6
    torque_weight: float = 100.0
    tangential_weight: float = 100.0
    vertical_force: bool = False
    dog_points: tuple = ("hip",)
    human_points: tuple = ("hip",)

    def params(self) -> SafetyParams:
        return SafetyParams(
            ecbf=EcbfParams(self.pole_lambda, self.pole_omega), F_max=self.F_max, u_max=self.u_max,
            control_rate=self.control_rate, slack_weight=self.slack_weight, torque_weight=self.torque_weight,
            tangential_weight=self.tangential_weight, vertical_force=self.vertical_force,
        )

    def field(self, obstacles=None) -> ObstacleField:
        obs = self.obstacles if obstacles is None else obstacles
        return ObstacleField(np.asarray(obs, dtype=float).reshape(-1, 2), self.h_min)

    def points(self) -> CriticalPoints:
        return CriticalPoints(tuple(self.dog_points), tuple(self.human_points))


@dataclass(frozen=True)
class BatterySection:
    n: int = 20
    x_range: tuple = (2.0, 3.0)
    y_abs_range: tuple = (0.05, 0.25)


@dataclass(frozen=True)
class SimSection:
    rtol: float = 1e-8
    atol: float = 1e-9
    h_max: float = 0.02


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    pipeline: str = "leashed"
    models: ModelRefs = ModelRefs()
    leash: LeashControllerParams = LeashControllerParams()
    heading: HeadingParams = HeadingParams()
    safety: SafetySection = SafetySection()
    battery: BatterySection = BatterySection()
    sim: SimSection = SimSection()
    r0: float = 1.5  # initial leash length, human trailing along +X
    horizon: float = 20.0
    speed_window: float = 5.0  # trailing window for average speeds and leash band checks
    poincare: bool = False  # add a fixed-point verdict at the configured kappa to the summary
    seed: int = 0
    output: str = "out"
    version: int = CONFIG_VERSION
    base_dir: str = field(default=".", compare=False)  # resolves relative model refs

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ContractViolation(f"pipeline must be one of {PIPELINES}")
        if not self.horizon > 0:
            raise ContractViolation("horizon must be positive")
        if not 0 < self.speed_window <= self.horizon:
            raise ContractViolation("speed_window must lie in (0, horizon]")
        if not self.r0 > 0:
            raise ContractViolation("r0 must be positive")
        self.safety.params()  # validates the control rate and weights
        if self.pipeline == "filtered" and len(self.safety.obstacles) == 0:
            log.info("filtered pipeline without obstacles: the filter must be transparent")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def with_output(self, out) -> "ScenarioConfig":
        return replace(self, output=str(out))

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            d[f.name] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
        return _plain(d)


_SECTIONS = {
    "models": ModelRefs, "leash": LeashControllerParams, "heading": HeadingParams,
    "safety": SafetySection, "battery": BatterySection, "sim": SimSection,
}
_TUPLE_FIELDS = {"obstacles", "u_max", "dog_points", "human_points", "x_range", "y_abs_range"}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _tupled(v):
    if isinstance(v, list):
        return tuple(_tupled(e) for e in v)
    return v


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line of each mapping key in the document."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                out[key] = k.start_mark.line + 1
                walk(v, key)

    walk(root, ())
    return out


def config_from_dict(doc: dict, text: str | None = None, source: str | None = None,
                     base_dir: str = ".") -> ScenarioConfig:
    lines = _key_lines(text) if text is not None else {}

    def fail(msg, path=()):
        raise ConfigError(msg, line=lines.get(tuple(path)), source=source)

    if doc.get("version") != CONFIG_VERSION:
        fail(f"unsupported scenario version {doc.get('version')!r} (expected {CONFIG_VERSION})", ("version",))
    top = {f.name: f for f in fields(ScenarioConfig)}
    kw = {}
    for key, val in doc.items():
        if key not in top or key == "base_dir":
            fail(f"unknown key {key!r}", (key,))
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(val, dict):
                fail(f"section {key!r} must be a mapping", (key,))
            names = {f.name for f in fields(cls)}
            sub = {}
            for k2, v2 in val.items():
                if k2 not in names:
                    fail(f"unknown key {key}.{k2}", (key, k2))
                sub[k2] = _tupled(v2) if k2 in _TUPLE_FIELDS and v2 is not None else v2
            try:
                kw[key] = cls(**sub)
                if key == "safety":
                    kw[key].params()
            except (ContractViolation, TypeError) as exc:
                msg = str(exc)
                bad = next((k for k in sub if k in msg or k.replace("_", " ") in msg), None)
                fail(f"invalid {key}: {exc}", (key, bad) if bad else (key,))
        else:
            kw[key] = val
    try:
        cfg = ScenarioConfig(base_dir=base_dir, **kw)
    except (ContractViolation, TypeError) as exc:
        bad = next((k for k in ("control_rate", "horizon", "pipeline", "r0") if k in str(exc)), None)
        path = ("safety", "control_rate") if bad == "control_rate" else ((bad,) if bad else ())
        fail(f"invalid scenario: {exc}", path)
    for ref_key in ("dog_model", "dog_gait", "human_model", "human_gait"):
        ref = getattr(cfg.models, ref_key)
        if not _resolve_ref(ref, cfg.base_dir).is_file():
            fail(f"file reference {ref!r} does not resolve", ("models", ref_key))
    return cfg


def parse_config(text: str, source: str | None = None, base_dir: str = ".") -> ScenarioConfig:
    return config_from_dict(parse_document(text, source=source), text=text, source=source, base_dir=base_dir)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path), base_dir=str(path.parent))


def dump_config(cfg: ScenarioConfig) -> str:
    """Normalized document: every field explicit, sorted keys."""
    return dump_document(cfg.to_dict())


def bundled_config(name: str) -> ScenarioConfig:
    return load_config(DATA_DIR / "scenarios" / f"{name}.yaml")


def _resolve_ref(ref: str, base_dir: str) -> Path:
    if ref.startswith(BUNDLED):
        return DATA_DIR / f"{ref[len(BUNDLED):]}.yaml"
    p = Path(ref)
    return p if p.is_absolute() else Path(base_dir) / p


def build_pair(cfg: ScenarioConfig) -> LeashedPair:
    m = cfg.models
    dog = Walker(load_model(_resolve_ref(m.dog_model, cfg.base_dir)), load_gait(_resolve_ref(m.dog_gait, cfg.base_dir)))
    human = Walker(load_model(_resolve_ref(m.human_model, cfg.base_dir)),
                   load_gait(_resolve_ref(m.human_gait, cfg.base_dir)))
    leash = cfg.leash.with_kappa(0.0) if cfg.pipeline == "unleashed" else cfg.leash
    return LeashedPair(dog, human, leash, cfg.heading)


def initial_state(cfg: ScenarioConfig, pair: LeashedPair) -> np.ndarray:
    for w in pair.walkers:
        if w.gait.fixed_point is None:
            raise ContractViolation(f"gait {w.gait.name} has no stored fixed point")
    return place_pair(pair, pair.dog.gait.fixed_point, pair.human.gait.fixed_point, cfg.r0)


# --------------------------------------------------------------------- runs


@dataclass
class RunResult:
    """Trajectory data of one run, before it is written out."""

    t: np.ndarray
    modes: list
    x: np.ndarray  # (n, 26)
    com: np.ndarray  # (n, 2, 2)
    r: np.ndarray
    theta: np.ndarray
    events: list
    failure: str | None
    safety: dict | None
    wall: float


def simulate_run(cfg: ScenarioConfig, pair: LeashedPair, obstacles=None, filtered: bool | None = None) -> RunResult:
    filtered = (cfg.pipeline == "filtered") if filtered is None else filtered
    x0 = initial_state(cfg, pair)
    s = cfg.sim
    t0 = time.perf_counter()
    flt = None
    if filtered:
        sp = cfg.safety.params()
        flt = SafetyFilter(cfg.safety.field(obstacles), cfg.safety.points(), sp)
        system = ComplexSystem(pair, controller=flt)
        opts = SimOptions(rtol=s.rtol, atol=s.atol, h_max=min(s.h_max, sp.period), sample_period=sp.period)
    else:
        system = ComplexSystem(pair)
        opts = SimOptions(rtol=s.rtol, atol=s.atol, h_max=s.h_max)
    tr = simulate(system, (0, 0), x0, cfg.horizon, opts)
    wall = time.perf_counter() - t0
    samples = tr.samples()
    t = np.array([smp[0] for smp in samples])
    X = np.array([smp[2] for smp in samples])
    modes = [smp[1] for smp in samples]
    com = np.array([ground_com(pair, x) for x in X])
    geo = [evaluate(pair, m, x) for m, x in zip(modes, X)]
    r = np.array([g.r for g in geo])
    th = np.array([g.theta for g in geo])
    safety = None
    if flt is not None:
        safety = {
            "events": flt.events_json(),
            "n_samples": flt.n_samples,
            "n_active": flt.n_active,
            "max_deviation_when_slack": flt.max_deviation_when_slack,
        }
    return RunResult(t, modes, X, com, r, th, tr.events_json(), tr.failure, safety, wall)


def _at(t: np.ndarray, y: np.ndarray, tq: float) -> float:
    return float(np.interp(tq, t, y))


def tail_speeds(res: RunResult, window: float) -> np.ndarray:
    """Average COM x-speed of each agent over the trailing window."""
    t1 = res.t[-1]
    t0 = max(res.t[0], t1 - window)
    if t1 <= t0:
        return np.full(2, math.nan)
    return np.array([(_at(res.t, res.com[:, a, 0], t1) - _at(res.t, res.com[:, a, 0], t0)) / (t1 - t0)
                     for a in (DOG, HUMAN)])


def summarize(cfg: ScenarioConfig, res: RunResult, field_: ObstacleField | None = None) -> dict:
    w = cfg.speed_window
    v = tail_speeds(res, w)
    tail = res.t >= res.t[-1] - w
    counts = {name: sum(1 for e in res.events if e["guard"] == name) for name in GUARD_NAMES}
    out = {
        "schema_version": SUMMARY_SCHEMA,
        "name": cfg.name,
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "kappa": 0.0 if cfg.pipeline == "unleashed" else cfg.leash.kappa,
        "t_final": float(res.t[-1]),
        "completed": res.failure is None and abs(res.t[-1] - cfg.horizon) < 1e-9,
        "failure": res.failure,
        "n_samples": int(res.t.size),
        "agents": {},
        "speed_gap": float(abs(v[DOG] - v[HUMAN])),
        "relative_speed_gap": float(abs(v[DOG] - v[HUMAN]) / max(abs(v[DOG]), abs(v[HUMAN]), 1e-12)),
        "leash": {
            "r_final": float(res.r[-1]),
            "theta_final": float(res.theta[-1]),
            "r_min_tail": float(np.min(res.r[tail])),
            "r_max_tail": float(np.max(res.r[tail])),
            "in_band_tail": bool(np.all((res.r[tail] >= cfg.leash.r_min) & (res.r[tail] <= cfg.leash.r_max))),
        },
        "event_counts": {**counts, "qp_infeasible": 0},
        "min_barrier": None,
        "min_barrier_time": None,
        "safety": None,
        "poincare": None,
    }
    for a, name in enumerate(AGENT_NAMES):
        out["agents"][name] = {
            "mean_speed_tail": float(v[a]),
            "com_x_final": float(res.com[-1, a, 0]),
            "cross_track_final": float(res.com[-1, a, 1]),
            "cross_track_max": float(np.max(np.abs(res.com[:, a, 1]))),
        }
    if field_ is not None and len(field_):
        pts = cfg.safety.points()
        hs = np.array([min_barrier(field_, pts, x) for x in res.x])
        k = int(np.argmin(hs))
        out["min_barrier"] = float(hs[k])
        out["min_barrier_time"] = float(res.t[k])
    if res.safety is not None:
        out["safety"] = {k: v for k, v in res.safety.items() if k != "events"}
        out["event_counts"]["qp_infeasible"] = sum(1 for e in res.safety["events"] if e["type"] == "qp_infeasible")
    return out


def _csv(rows, header) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _f(v) -> str:
    return repr(float(v))


def _mode(m) -> str:
    return "|".join(str(e) for e in m)


def write_run(out: Path, res: RunResult, summary: dict, prefix: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{prefix}trajectory.csv").write_text(_csv(
        ([_f(t), _mode(m), *(_f(v) for v in x)] for t, m, x in zip(res.t, res.modes, res.x)),
        ["t", "domain", *agent_state_labels()]), encoding="utf-8", newline="")
    (out / f"{prefix}com.csv").write_text(_csv(
        ([_f(t), name, _f(res.com[i, a, 0]), _f(res.com[i, a, 1])]
         for i, t in enumerate(res.t) for a, name in enumerate(AGENT_NAMES)),
        ["t", "agent", "x", "y"]), encoding="utf-8", newline="")
    (out / f"{prefix}leash.csv").write_text(_csv(
        ([_f(t), _f(r), _f(th)] for t, r, th in zip(res.t, res.r, res.theta)),
        ["t", "r", "theta"]), encoding="utf-8", newline="")
    (out / f"{prefix}events.json").write_text(dump_json({"events": res.events, "failure": res.failure}), encoding="utf-8")
    (out / f"{prefix}safety.json").write_text(dump_json(res.safety or {"events": []}), encoding="utf-8")
    (out / f"{prefix}summary.json").write_text(dump_json(summary), encoding="utf-8")


@dataclass
class RunSummary:
    summary: dict
    out_dir: Path
    wall: dict

    @property
    def ok(self) -> bool:
        return self.summary.get("failure") is None and not self.summary.get("battery_failures")


def poincare_verdict(cfg: ScenarioConfig, pair: LeashedPair) -> dict:
    rep = analyze(complex_return_problem(pair), section_guess(pair))
    return {"verdict": rep.verdict, "spectral_radius": rep.spectral_radius, "residual": rep.residual,
            "period": rep.period}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunSummary:
    """Execute the configured pipeline and write its artifacts."""
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    pair = build_pair(cfg)
    t0 = time.perf_counter()
    if cfg.pipeline == "battery":
        summary = run_battery(cfg, pair, out)
        wall = {"total_s": time.perf_counter() - t0}
    else:
        res = simulate_run(cfg, pair)
        fld = cfg.safety.field() if len(cfg.safety.obstacles) else None
        summary = summarize(cfg, res, fld)
        if cfg.poincare:
            try:
                summary["poincare"] = poincare_verdict(cfg, pair)
            except CoopwalkError as exc:
                summary["poincare"] = {"verdict": "failed", "error": f"{type(exc).__name__}: {exc}"}
        write_run(out, res, summary)
        wall = {"simulate_s": res.wall, "total_s": time.perf_counter() - t0}
    (out / "timing.json").write_text(dump_json(wall), encoding="utf-8")
    return RunSummary(summary, out, wall)


# --------------------------------------------------------------------- battery


def battery_placements(cfg: ScenarioConfig) -> np.ndarray:
    """Obstacle placements ahead of the dog, off-centre by a random signed offset."""
    b = cfg.battery
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(b.x_range[0], b.x_range[1], b.n)
    y = rng.uniform(b.y_abs_range[0], b.y_abs_range[1], b.n) * rng.choice([-1.0, 1.0], b.n)
    return np.column_stack([x, y])


def run_battery(cfg: ScenarioConfig, pair: LeashedPair, out: Path | None = None) -> dict:
    """Paired runs per placement. The unfiltered trajectory does not depend on the obstacle,
    so one unfiltered run scores every placement."""
    pts = cfg.safety.points()
    ref = simulate_run(cfg, pair, filtered=False)
    rows = []
    for i, o in enumerate(battery_placements(cfg)):
        fld = cfg.safety.field([o])
        h_unf = min(min_barrier(fld, pts, x) for x in ref.x)
        res = simulate_run(cfg, pair, obstacles=[o], filtered=True)
        h_f = min(min_barrier(fld, pts, x) for x in res.x)
        n_inf = sum(1 for e in res.safety["events"] if e["type"] == "qp_infeasible")
        rows.append({
            "index": i, "x": float(o[0]), "y": float(o[1]),
            "min_h_unfiltered": float(h_unf), "min_h_filtered": float(h_f),
            "failure": res.failure, "qp_infeasible": n_inf,
            "completed": res.failure is None,
        })
        log.info("placement %d (%.3f, %.3f): unfiltered %.4f filtered %.6f %s",
                 i, o[0], o[1], h_unf, h_f, res.failure or "")
    summary = {
        "schema_version": SUMMARY_SCHEMA,
        "name": cfg.name,
        "pipeline": "battery",
        "seed": cfg.seed,
        "n_placements": len(rows),
        "n_violated_unfiltered": sum(r["min_h_unfiltered"] < 0 for r in rows),
        "min_h_filtered": min(r["min_h_filtered"] for r in rows) if rows else None,
        "battery_failures": [r["index"] for r in rows if r["failure"] is not None],
        "placements": rows,
        "unfiltered_failure": ref.failure,
    }
    if out is not None:
        (out / "battery.csv").write_text(_csv(
            ([r["index"], _f(r["x"]), _f(r["y"]), _f(r["min_h_unfiltered"]), _f(r["min_h_filtered"]),
              r["failure"] or "", r["qp_infeasible"]] for r in rows),
            ["index", "x", "y", "min_h_unfiltered", "min_h_filtered", "failure", "qp_infeasible"]),
            encoding="utf-8", newline="")
        (out / "summary.json").write_text(dump_json(summary), encoding="utf-8")
    return summary


# --------------------------------------------------------------------- poincare


def parse_kappa_grid(text: str) -> np.ndarray:
    """'a:b:n' -> n evenly spaced values from a to b inclusive."""
    parts = text.split(":")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise ContractViolation(f"kappa grid must read a:b:n, got {text!r}") from None
    if len(parts) != 3 or n < 1 or a < 0 or b < a:
        raise ContractViolation(f"kappa grid must read a:b:n with 0 <= a <= b and n >= 1, got {text!r}")
    return np.linspace(a, b, n)


def run_poincare(cfg: ScenarioConfig, kappa_grid=None, out_dir=None) -> dict:
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    pair = build_pair(cfg)
    guess = section_guess(pair)
    t0 = time.perf_counter()
    if kappa_grid is None:
        rep = analyze(complex_return_problem(pair), guess)
        result = {"schema_version": SUMMARY_SCHEMA, "kappa": pair.leash.kappa, **rep.to_dict()}
        (out / "poincare.json").write_text(dump_json(result), encoding="utf-8")
    else:
        table = theorem1_experiment(lambda k: complex_return_problem(pair.with_kappa(k)), list(kappa_grid), guess)
        result = {"schema_version": SUMMARY_SCHEMA, **table.to_dict()}
        (out / "sweep.csv").write_text(table.to_csv(), encoding="utf-8", newline="")
        (out / "sweep.json").write_text(dump_json(result), encoding="utf-8")
    (out / "timing.json").write_text(dump_json({"total_s": time.perf_counter() - t0}), encoding="utf-8")
    return result


# --------------------------------------------------------------------- compare


@dataclass
class DiffReport:
    deltas: dict  # dotted metric path -> b - a (numbers) or [a, b] (other changed values)

    def to_json(self) -> str:
        return dump_json({"schema_version": SUMMARY_SCHEMA, "deltas": self.deltas})


def _flatten(d, prefix="") -> dict:
    out = {}
    if isinstance(d, dict):
        for k, v in d.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(d, list):
        out[prefix[:-1]] = d
    else:
        out[prefix[:-1]] = d
    return out


def load_summary(path_or_dict) -> dict:
    if isinstance(path_or_dict, dict):
        return path_or_dict
    p = Path(path_or_dict)
    if p.is_dir():
        p = p / "summary.json"
    return json.loads(p.read_text(encoding="utf-8"))


def compare_runs(summary_a, summary_b) -> DiffReport:
    """Per-metric deltas b - a over the numeric leaves of two summaries."""
    a, b = load_summary(summary_a), load_summary(summary_b)
    va, vb = a.get("schema_version"), b.get("schema_version")
    if va is None or va != vb:
        raise SchemaMismatch(f"summary schema versions differ: {va!r} vs {vb!r}")
    fa, fb = _flatten(a), _flatten(b)
    deltas = {}
    for k in sorted(set(fa) | set(fb)):
        x, y = fa.get(k), fb.get(k)
        if isinstance(x, bool) or isinstance(y, bool):
            if x != y:
                deltas[k] = [x, y]
            continue
        if isinstance(x, (int, float)) and isinstance(y, (int, float)):
            deltas[k] = y - x
        elif x != y:
            deltas[k] = [x, y]
    return DiffReport(deltas)
