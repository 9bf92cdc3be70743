"""Standalone renderer: render --run DIR --figure NAME --out PATH."""

from __future__ import annotations

import argparse
import sys

from .artifacts import MissingArtifactError, SchemaMismatchError
from .render import RENDERERS


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render bridgemix run artifacts into figures.",
    )
    parser.add_argument("--run", required=True, help="run directory with CLI outputs")
    parser.add_argument("--figure", required=True, choices=sorted(RENDERERS))
    parser.add_argument("--out", required=True, help="output image path (.png)")
    args = parser.parse_args(argv)
    try:
        RENDERERS[args.figure](args.run, args.out)
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 2
    except SchemaMismatchError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
