"""``mrbsde`` command line: ``solve``, ``chaos`` and ``validate``."""

from __future__ import annotations

import argparse
import sys

from .errors import MRBSDEError
from .harness import cmd_chaos, cmd_solve, cmd_validate, dump_json, error_document


def _n_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrbsde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configured instance")
    s.add_argument("--config", required=True, help="JSON config document")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--timing", action="store_true", help="record wall time in summary.json")
    s.add_argument("--particles", action="store_true", help="also write particles.csv")

    c = sub.add_parser("chaos", help="propagation-of-chaos sweep against an oracle")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--n", type=_n_list, default=None, help="particle counts, e.g. 250,500,1000,2000")
    c.add_argument("--reps", type=int, default=None)

    v = sub.add_parser("validate", help="run the invariant suites")
    v.add_argument("--suite", default="all", help="reflection, solver, oracle or all")
    v.add_argument("--fixtures", default=None, help="directory holding golden files")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            summary = cmd_solve(args.config, args.out, timing=args.timing, particles=args.particles)
            sys.stdout.write(dump_json(summary))
            return 0
        if args.command == "chaos":
            report = cmd_chaos(args.config, args.out, n_list=args.n, reps=args.reps)
            sys.stdout.write(dump_json(report.fits))
            return 0
        return cmd_validate(args.suite, args.fixtures)
    except MRBSDEError as exc:
        print(error_document(exc))
        return exc.exit_status
    except (OSError, ValueError) as exc:
        print(error_document(_wrap(exc)))
        return 2


def _wrap(exc: Exception) -> MRBSDEError:
    err = MRBSDEError(str(exc))
    err.code = type(exc).__name__
    return err


if __name__ == "__main__":
    sys.exit(main())
