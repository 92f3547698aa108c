"""Command-line entry point: ``plasthin {simulate-h,simulate-hom,converge,audit}``.

Exit codes: 0 success, 2 configuration or input error, 3 solver
non-convergence, 4 audit failure (or a reversed convergence trend).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigurationError, ConvergenceError, PlasthinError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_AUDIT = 4

log = logging.getLogger("plasthin")


def _setup_logging() -> None:
    level = os.environ.get("PLASTHIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load(args):
    from .config import ScenarioConfig

    if args.config is None:
        raise ConfigurationError("--config is required")
    cfg = ScenarioConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    out = Path(args.out if args.out is not None else cfg.raw["output"])
    return cfg, out


def cmd_simulate_h(args) -> int:
    from .harness import run_h, write_run

    cfg, out = _load(args)
    result = run_h(cfg)
    write_run(result, cfg, out, "simulate-h")
    print(f"wrote {out} ({len(result.states) - 1} steps, audit {'passed' if result.passed else 'FAILED'})")
    return EXIT_OK if result.passed else EXIT_AUDIT


def cmd_simulate_hom(args) -> int:
    from .harness import run_hom, write_run

    cfg, out = _load(args)
    result = run_hom(cfg)
    write_run(result, cfg, out, "simulate-hom")
    print(f"wrote {out} ({len(result.states) - 1} steps, audit {'passed' if result.passed else 'FAILED'})")
    return EXIT_OK if result.passed else EXIT_AUDIT


def cmd_converge(args) -> int:
    from .harness import converge, write_convergence

    cfg, out = _load(args)
    report = converge(cfg, jobs=int(cfg.raw["jobs"]))
    write_convergence(report, cfg, out)
    for r in report.all_rows():
        print(f"h={r['h']}: Q={r['Q_h']:.6g} D={r['D_h']:.6g} energy_gap={r['energy_gap']:.3e} "
              f"strain_gap={r['strain_gap']:.3e}")
    if not report.trend_ok:
        print("energy gap at the smallest h exceeds the gap at the largest h", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_audit(args) -> int:
    from .harness import AUDIT_COLUMNS, audit_directory, write_csv

    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigurationError(f"{run_dir} is not a directory")
    rows = audit_directory(run_dir)
    out = Path(args.out) if args.out is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "audit_offline.csv", AUDIT_COLUMNS, rows)
    bad = [r["step"] for r in rows if not r["passed"]]
    if bad:
        print(f"admissibility violated at steps {bad}", file=sys.stderr)
        return EXIT_AUDIT
    print(f"{len(rows)} states admissible")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plasthin",
        description="Quasistatic perfect plasticity of thin periodic plates: finite-thickness and two-scale solvers.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--out", help="output directory (default: the config's 'output')")
    common.add_argument("--seed", type=int, help="override the random seed of the stability audit")
    common.add_argument("--jobs", type=int, help="worker processes for independent runs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-h", parents=[common], help="finite-thickness evolution for the first h")
    sub.add_parser("simulate-hom", parents=[common], help="two-scale evolution")
    sub.add_parser("converge", parents=[common], help="h-sequence against the two-scale model")
    p = sub.add_parser("audit", parents=[common], help="re-check saved stresses of a run directory")
    p.add_argument("run_dir", help="directory written by simulate-h or simulate-hom")
    return parser


COMMANDS = {
    "simulate-h": cmd_simulate_h,
    "simulate-hom": cmd_simulate_hom,
    "converge": cmd_converge,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (PlasthinError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
