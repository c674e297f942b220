"""Command line entry point: ``fedluck run|grid|phi-eval``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .profiler import OptimizerBounds, phi_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _range(text: str, kind: type) -> tuple:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected lo:hi[:step], got {text!r}")
    try:
        lo, hi = kind(parts[0]), kind(parts[1])
        extra = int(parts[2]) if len(parts) == 3 else None
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return lo, hi, extra


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedluck", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation and write a run directory")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir", default="runs/latest")

    grid = sub.add_parser("grid", help="FedPer over a (k, delta) grid")
    grid.add_argument("config")
    grid.add_argument("--k", type=int, nargs="+", default=[10, 20, 30, 40, 50, 60])
    grid.add_argument("--delta", type=float, nargs="+", default=[0.001, 0.005, 0.01, 0.05, 0.1, 0.5])
    grid.add_argument("--seed", type=int)
    grid.add_argument("--out-dir", default="runs/grid")
    grid.add_argument("--workers", type=int, default=1)

    pe = sub.add_parser("phi-eval", help="print the convergence factor over a grid as CSV")
    pe.add_argument("--alpha", type=float, required=True)
    pe.add_argument("--beta", type=float, required=True)
    pe.add_argument("--round-duration", type=float, required=True)
    pe.add_argument("--k-range", type=lambda s: _range(s, int), default=(10, 60, 1),
                    help="k_min:k_max[:step]")
    pe.add_argument("--delta-range", type=lambda s: _range(s, float), default=(0.001, 0.5, 64),
                    help="delta_min:delta_max[:points] (log-spaced)")
    return parser


def _phi_eval(args) -> int:
    k_lo, k_hi, k_step = args.k_range
    d_lo, d_hi, d_pts = args.delta_range
    bounds = OptimizerBounds(k_lo, k_hi, d_lo, d_hi, args.round_duration, k_step or 1, d_pts or 64)
    ks, deltas, values = phi_table(args.alpha, args.beta, bounds)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "delta", "phi"])
    for i, k in enumerate(ks):
        for j, d in enumerate(deltas):
            w.writerow([int(k), repr(float(d)), repr(float(values[i, j]))])
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "phi-eval":
            return _phi_eval(args)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_updates(seed=args.seed)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiment import run_experiment, run_grid

    try:
        if args.command == "run":
            out = run_experiment(cfg, Path(args.out_dir))
            print(f"wrote {out}")
        else:
            cells = run_grid(cfg, args.k, args.delta, out_dir=Path(args.out_dir), workers=args.workers)
            failed = sum(c.status != "ok" for c in cells)
            print(f"wrote {args.out_dir} ({len(cells)} cells, {failed} failed)")
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
