"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a check fails (or a backend error),
2 the spec is invalid, 3 a resource cap was hit.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .report import emit_report
from .runner import run
from .runspec import BACKENDS, COMMANDS, SpecError, load_spec

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_RESOURCE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kreinacm",
                                description="Numerical checks for Krein spectral triples on lattice products.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", required=True, help="JSON run specification")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--samples", type=int, help="override the sample count")
    p.add_argument("--backend", choices=BACKENDS, help="override the fluctuation backend")
    p.add_argument("--timings", action="store_true", help="record wall times (reports stop being byte-stable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rs = load_spec(args.spec)
        rs.command = args.command
        if args.seed is not None:
            if args.seed < 0:
                raise SpecError("must be >= 0", "seed")
            rs.seed = args.seed
        if args.samples is not None:
            if args.samples < 1:
                raise SpecError("must be >= 1", "samples")
            rs.samples = args.samples
        if args.backend is not None:
            rs.backend = args.backend
        report = run(rs, timings=args.timings)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    data = emit_report(report, args.format)
    out = args.out or rs.output
    if out:
        with open(out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    if any(e.get("kind") == "resource" for e in report.errors):
        return EXIT_RESOURCE
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
