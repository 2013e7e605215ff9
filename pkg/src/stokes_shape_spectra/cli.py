"""Command-line entry point.

Usage:
    stokes-shape-spectra <subcommand> --config <path> [--out DIR] [--workers K]

Subcommands: validate-kernels | scan | solve | perturb | full.
Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 validation failure.
"""

import argparse
import sys

from .config import load_config
from .errors import ConfigError, SolverError, StokesSpectraError
from .pipeline import STAGES, run_pipeline


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stokes-shape-spectra",
        description=("Stokes Dirichlet eigenvalues on closed surfaces and "
                     "their expansions under normal boundary perturbations"))
    parser.add_argument("subcommand", choices=STAGES,
                        help="pipeline stage to run")
    parser.add_argument("--config", required=True,
                        help="path to the run configuration file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker count for parallel stages")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code = run_pipeline(config, stage=args.subcommand,
                            out_dir=args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except StokesSpectraError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 4
    return code


if __name__ == "__main__":
    sys.exit(main())
