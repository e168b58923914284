"""Command-line harness: ``bfsplit <experiment> [options]``.

Writes CSV to ``--out`` (or stdout) and a short summary to stderr.
Exit status: 0 ok, 1 usage error, 2 bound violation, 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import (
    EXPERIMENTS,
    BoundViolation,
    ConfigError,
    ExperimentConfig,
    run,
    to_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _int_list(text):
    try:
        return tuple(int(t) for t in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bfsplit", description="Split-BF16 accuracy and solver experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--sizes", type=_int_list, default=(), help="comma-separated sizes")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", type=_csv_list, default=(),
                   help="uniform[:lo:hi] | wide[:emin:emax] | gaussian[:mean:sigma] | cond:<k> | diagdom; "
                        "comma-separated for sweeps")
    p.add_argument("--schemes", type=_csv_list, default=(),
                   help="product schemes, or working precisions for refine/gmres")
    p.add_argument("--densities", type=_csv_list, default=(), help="speedup: BF16/FP32 density ratios")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.add_argument("--paper-scale", action="store_true", help="use the full trial counts")
    return p


def _summary(cfg, rows) -> str:
    return f"{cfg.experiment}: {len(rows)} rows, config {cfg.config_hash()}, seed {cfg.seed}, trials {cfg.trials}"


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = ExperimentConfig(
            experiment=args.experiment, dists=args.dist, sizes=args.sizes, schemes=args.schemes,
            trials=args.trials, seed=args.seed, paper_scale=args.paper_scale,
            densities=args.densities, out=args.out,
        ).resolved()
    except (UsageError, ConfigError) as exc:
        print(f"bfsplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    status = EXIT_OK
    try:
        rows = run(cfg)
    except BoundViolation as exc:
        rows = exc.rows
        status = EXIT_VIOLATION
        print(f"bfsplit: {exc}", file=sys.stderr)

    text = to_csv(cfg.experiment, rows)
    try:
        if cfg.out:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"bfsplit: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(_summary(cfg, rows), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
