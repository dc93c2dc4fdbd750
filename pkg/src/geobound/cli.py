"""Command-line front end: ``geobound PROGRAM [options]``."""

from __future__ import annotations

import argparse
import sys

from .lang import ParseError, parse
from .limits import ResourceLimitError
from .report import AnalysisOptions, analyze, render
from .solve import FEASIBLE, to_smtlib


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geobound",
        description="Guaranteed bounds on the output distribution of a discrete probabilistic program.")
    ap.add_argument("program", help="program file")
    ap.add_argument("--mode", choices=["residual", "geometric", "both"], default="both")
    ap.add_argument("--unroll", type=_nonneg, default=30, metavar="U", help="loop unrolling depth")
    ap.add_argument("--invariant-size", type=_positive, default=1, metavar="D",
                    help="block size of contraction invariants per unbounded variable")
    ap.add_argument("--objective", choices=["mass", "ev", "tail"], default="ev")
    ap.add_argument("--var", metavar="NAME", help="variable to optimize for (default: the first)")
    ap.add_argument("--moments", type=_nonneg, default=2, metavar="K")
    ap.add_argument("--limit", type=_nonneg, default=50, metavar="N", help="number of mass points")
    ap.add_argument("--format", choices=["text", "json", "csv"], default="text")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=_positive, default=5000, help="penalty solver iteration cap")
    ap.add_argument("--timeout", type=float, default=300.0, metavar="SECS")
    ap.add_argument("--export-smt", metavar="PATH", help="write the constraint system as SMT-LIB 2")
    ap.add_argument("--dump-constraints", metavar="PATH", help="write the constraint system as text")
    ap.add_argument("--timings", action="store_true", help="include wall-clock times in the output")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        with open(args.program, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"geobound: cannot read {args.program}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    try:
        program = parse(source)
    except ParseError as exc:
        print(f"geobound: {args.program}: {exc}", file=sys.stderr)
        return 1
    var = 0
    if args.var is not None:
        try:
            var = program.var_index(args.var)
        except KeyError:
            ap.print_usage(sys.stderr)
            print(f"geobound: error: unknown variable {args.var!r}", file=sys.stderr)
            return 2
    opts = AnalysisOptions(mode=args.mode, unroll=args.unroll, invariant_size=args.invariant_size,
                           objective=args.objective, var=var, moments=args.moments,
                           limit=args.limit, seed=args.seed, timeout=args.timeout,
                           iterations=args.iterations)
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))
    try:
        report = analyze(program, opts, program=args.program)
    except ResourceLimitError as exc:
        print(f"geobound: resource limit exceeded: {exc}", file=sys.stderr)
        return 1
    if args.mode != "residual" and report.solver.status != FEASIBLE:
        print(f"geobound: warning: no geometric bound found ({report.solver.status}); "
              "upper bounds come from the residual mass only", file=sys.stderr)
    try:
        if report.constraint_system is not None:
            if args.export_smt:
                with open(args.export_smt, "w", encoding="utf-8") as fh:
                    fh.write(to_smtlib(report.constraint_system))
            if args.dump_constraints:
                with open(args.dump_constraints, "w", encoding="utf-8") as fh:
                    fh.write(report.constraint_system.dump())
        elif args.export_smt or args.dump_constraints:
            print("geobound: warning: no constraint system was generated (residual mode or timeout)",
                  file=sys.stderr)
    except OSError as exc:
        print(f"geobound: cannot write output file: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(render(report, args.format, var=var, timings=args.timings))
    return 0


if __name__ == "__main__":
    sys.exit(main())
