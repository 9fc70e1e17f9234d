"""Command-line entry point: ``logconvex --experiment NAME --config FILE [--seed N] [--out DIR]``.

Exit status is 0 when every enabled check passes, 1 when a check fails or a
solver breaks down, and 2 for invalid configuration.
"""
from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .errors import ConditioningError, ConfigurationError, LogConvexError
from .experiments import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logconvex", description="Backward-uniqueness and log-convexity experiments.")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="INI file with [section] key = value lines")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides noise.seed)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = cfg.with_value("noise.seed", args.seed)
        status = run_experiment(cfg, args.out)
    except (ConfigurationError, ConditioningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LogConvexError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot write artifacts: {exc}", file=sys.stderr)
        return 2
    with open(f"{args.out}/summary.txt") as fh:
        sys.stdout.write(fh.read())
    return status


if __name__ == "__main__":
    sys.exit(main())
