"""Command line entry: `clvlab-viz render --job <json>`."""

import argparse
import sys

from .jobs import SchemaError, load_job
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clvlab-viz", description="Render figures from pipeline artifacts."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="draw one figure described by a job file")
    p_render.add_argument("--job", required=True, help="path to the job JSON document")
    args = parser.parse_args(argv)

    try:
        job = load_job(args.job)
        out = render(job)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


def entry() -> None:
    raise SystemExit(main())
