"""Command-line entry point: ``bdris {scaling,sweep,grid,validate}``.

Exit status is 0 on success. On failure a one-line JSON object
``{"error": <type>, "message": <text>}`` goes to stderr and the status is 1
(2 for usage errors, as argparse does).
"""

import argparse
import json
import logging
import sys

from . import __version__
from .errors import BDRISError
from .experiment import (
    ExperimentConfig,
    emit,
    run_experiment,
    scaling_curves,
    scaling_grid,
    validate_scaling,
)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="bdris", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-trial warnings")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "scaling": "closed-form gain curves against the path-loss exponent",
        "sweep": "paired Monte Carlo sweep through the optimizer",
        "grid": "closed-form gain heatmap over receiver positions",
        "validate": "sampled expected powers against the scaling laws",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--seed", type=_u64)
        s.add_argument("--out", help="output path, '-' for stdout")
        s.add_argument("--format", choices=("csv", "json"))
        s.add_argument("--trials", type=_positive)
    return p


def run(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(seed=args.seed, out=args.out, format=args.format, trials=args.trials)
    if args.trials is not None:
        cfg = cfg.with_overrides(mc_trials=args.trials)
    if args.command == "scaling":
        table = scaling_curves(cfg)
    elif args.command == "grid":
        table = scaling_grid(cfg)
    elif args.command == "validate":
        table = validate_scaling(cfg)
    else:
        table = run_experiment(cfg)
    text = emit(table, cfg.format, cfg.out)
    if cfg.out in (None, "-"):
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (BDRISError, OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
