"""Command line entry point.

    ucbench --config run.cfg --out results/ [--workers N] [--seed-override S]

Exit status: 0 when every verdict passes, 2 when an experiment ran but a
verdict failed, 1 on configuration or input errors.  ``UCBENCH_LOG`` sets the
log level (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .experiments import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2

log = logging.getLogger("ucbench")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ucbench", description="Run a unique continuation experiment from a config file.")
    p.add_argument("--config", required=True, type=Path, help="experiment config (key = value lines)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads for parameter sweeps (default: CPU count)")
    p.add_argument("--seed-override", type=int, default=None, help="replace the seed from the config")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("UCBENCH_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        results = run_experiment(cfg, workers=args.workers, seed_override=args.seed_override)
    except (ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as exc:
        print(f"experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED

    failed = False
    multi = len(results) > 1
    for name, report, plot in results:
        out = args.out / name if multi else args.out
        report.write(out, plot)
        status = "PASS" if report.passed else "FAIL"
        bad = [k for k, v in report.verdicts.items() if not v]
        print(f"{name}: {status}" + (f" ({', '.join(bad)})" if bad else "") + f" -> {out}")
        failed |= not report.passed
    return EXIT_FAILED if failed else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
