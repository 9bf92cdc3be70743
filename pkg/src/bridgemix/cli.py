"""Command-line entry point.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical aborts.
"""

from __future__ import annotations

import argparse
import sys

from . import commands
from .config import load_config
from .errors import ConfigError, NumericalAbort

COMMANDS = {
    "toy": commands.cmd_toy,
    "inspect-weights": commands.cmd_inspect_weights,
    "train": commands.cmd_train,
    "sample": commands.cmd_sample,
    "gp": commands.cmd_gp,
    "variogram": commands.cmd_variogram,
}

FIELD_FORMAT_HELP = (
    "Field files: flat binary of float64 little-endian values, H*W*C per "
    "field, row-major channel-last ((i*W + j)*C + c); CSV variant has one "
    "pixel per row with C columns. Datasets: headerless CSV, one sample per "
    "row. Shapes come from the [sde.gamma] / [dataset] config sections."
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bridgemix",
        description="Exact diffusion transports: bridge mixtures, time reversal, "
        "correlated-noise sampling.",
        epilog=FIELD_FORMAT_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="TOML or JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--out", default=None, help="override [run] out directory")
        p.add_argument("--threads", type=int, default=None, help="override [run] threads")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.out is not None:
            cfg["run"]["out"] = args.out
        if args.threads is not None:
            cfg["run"]["threads"] = args.threads
        out = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
