"""Command line: `coopwalk run|poincare|compare`.

Exit codes: 0 success, 1 simulation failure (cause in the summary),
2 configuration or usage error, 3 other library error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import dump_json
from .errors import ConfigError, ContractViolation, CoopwalkError, SchemaMismatch
from . import scenario

log = logging.getLogger("coopwalk")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed for randomized batteries (overrides the config)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coopwalk", description="Leashed dog-human walking scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("config")
    _common(p)
    p = sub.add_parser("poincare", help="fixed point and monodromy of the complex gait")
    p.add_argument("config")
    p.add_argument("--kappa-grid", help="a:b:n sweep of the leash gain")
    _common(p)
    p = sub.add_parser("compare", help="per-metric deltas between two run summaries")
    p.add_argument("a")
    p.add_argument("b")
    _common(p)
    return ap


def _load(args) -> scenario.ScenarioConfig:
    cfg = scenario.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            res = scenario.run_scenario(_load(args))
            s = res.summary
            print(f"{s['name']}: {s['pipeline']} -> {res.out_dir}")
            if not res.ok:
                print(f"failure: {s.get('failure') or s.get('battery_failures')}", file=sys.stderr)
                return 1
            return 0
        if args.command == "poincare":
            grid = scenario.parse_kappa_grid(args.kappa_grid) if args.kappa_grid else None
            cfg = _load(args)
            out = scenario.run_poincare(cfg, grid)
            if grid is None:
                print(f"verdict {out['verdict']}  spectral radius {out['spectral_radius']:.6f}  "
                      f"residual {out['residual']:.2e}")
            else:
                print(f"kappa_max_stable {out['kappa_max_stable']}  max eigen jump {out['max_eigen_jump']:.4f}")
            return 0
        if args.command == "compare":
            rep = scenario.compare_runs(args.a, args.b)
            text = rep.to_json()
            if args.out:
                from pathlib import Path

                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "compare.json").write_text(text, encoding="utf-8")
            sys.stdout.write(text)
            return 0
    except (ConfigError, ContractViolation, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CoopwalkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
