"""Command line entry point: ``mhdpot {run,converge,selftest}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .selftest import run_all


def _levels(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _tau(text: str):
    return None if text.lower() in ("h", "none") else float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="optional 'key = value' file; flags override it")
    common.add_argument("--case", choices=harness.CASES)
    common.add_argument("--scheme", choices=harness.SCHEMES)
    common.add_argument("--M", type=int, help="mesh level (nodes per unit length)")
    common.add_argument("--levels", type=_levels, help="comma separated mesh levels, e.g. 16,32,64")
    common.add_argument("--T", type=float, help="final time (default 1)")
    common.add_argument("--tau", type=_tau, help="time step; 'h' ties it to 1/M (default)")
    common.add_argument("--mu", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--nu", type=float)
    common.add_argument("--quad-degree", dest="quad_degree", type=int)
    common.add_argument("--provider-factor", dest="provider_factor", type=int)
    common.add_argument("--out", help="output path (CSV; a .md suffix selects Markdown)")

    p = argparse.ArgumentParser(prog="mhdpot", description="2D MHD solver, magnetic potential formulation")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("run", parents=[common], help="one mesh level, final-time errors")
    sub.add_parser("converge", parents=[common], help="convergence table over several levels")
    sub.add_parser("selftest", help="fast invariant checks; exit code 2 on failure")
    return p


def config_from_args(args) -> harness.StudyConfig:
    values = harness.read_config(args.config) if getattr(args, "config", None) else {}
    for key in ("case", "scheme", "levels", "T", "tau", "mu", "sigma", "nu", "quad_degree",
                "provider_factor", "out"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "M", None) is not None:
        values["levels"] = [args.M]
    return harness.StudyConfig(**values)


def _log(r: harness.RunResult) -> None:
    print(f"M={r.M:4d} err_H={harness.fmt(r.err_H)} err_u={harness.fmt(r.err_u)} "
          f"({r.seconds:.1f}s)", file=sys.stderr, flush=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "selftest":
        checks = run_all()
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
        return 0 if all(c.passed for c in checks) else 2
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.verb == "run":
        r = harness.run_single(cfg)
        _log(r)
        text = json.dumps(harness.result_summary(r), indent=2, default=float) + "\n"
        if cfg.out:
            Path(cfg.out).write_text(text)
            r.report.write_csv(Path(cfg.out).with_suffix(".energy.csv"))
        sys.stdout.write(text)
        return 0
    table, _ = harness.run_convergence(cfg, progress=_log)
    fmt = "markdown" if cfg.out and cfg.out.endswith(".md") else "csv"
    sys.stdout.write(harness.emit_table(table, fmt, cfg.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
