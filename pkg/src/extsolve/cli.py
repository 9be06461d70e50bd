"""Command-line front end.

Usage::

    extsolve <subcommand> --config <path> --out <dir>

Subcommands: solve, study-convergence, study-noise, study-conditioning,
check-kernels. Exit status is 0 for clean results, 1 when any result
carries a flag (or a kernel check fails), 2 for usage and config errors.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import (check_kernel, default_operators, run_study, thread_cap, fmt,
                         write_outputs)

logger = logging.getLogger("extsolve")

SUBCOMMANDS = ("solve", "study-convergence", "study-noise", "study-conditioning", "check-kernels")
EXIT_CLEAN, EXIT_FLAGGED, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="extsolve", description="Exterior extension solvers and studies.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        optional = name == "check-kernels"
        p.add_argument("--config", required=not optional, type=Path,
                       help="experiment config" + (" (default: all four operators)" if optional else ""))
        p.add_argument("--out", required=not optional, type=Path, help="output directory")
    return parser


def _check_kernels(args):
    ops = default_operators()
    if args.config is not None:
        ops = [load_config(args.config).operator]
    rows, ok_all = [], True
    for op in ops:
        ok, values = check_kernel(op)
        ok_all &= ok
        detail = " ".join(f"{k}={v:.3e}" for k, v in values.items())
        print(f"{'PASS' if ok else 'FAIL'} {op.kind} {detail}")
        rows.append([op.kind, "pass" if ok else "fail"] + [fmt(v) for v in values.values()])
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "kernels.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["operator", "status", "pde_residual", "symmetry", "conormal"])
            w.writerows(rows)
    return EXIT_CLEAN if ok_all else EXIT_FLAGGED


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in SUBCOMMANDS and not {"-h", "--help"} & set(argv):
        parser.print_usage(sys.stderr)
        if command is not None:
            print(f"extsolve: error: unknown subcommand {command!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check-kernels":
            return _check_kernels(args)
        threads = thread_cap()
        cfg = load_config(args.config)
        results = run_study(cfg, args.command, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_outputs(cfg, results, args.out)
    flagged = [r for r in results if r.flagged]
    for r in flagged:
        logger.warning("point %s flagged: %s", r.row["point"], r.row["flags"])
    print(f"{args.command}: {len(results)} point(s), {len(flagged)} flagged -> {args.out}")
    return EXIT_FLAGGED if flagged else EXIT_CLEAN


if __name__ == "__main__":
    sys.exit(main())
