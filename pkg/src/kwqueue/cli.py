"""Command line entry point: ``kwqueue run|verify|bounds|version``."""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import ConfigError, ExperimentConfig
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _seed_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kwqueue", description="Waiting-time tails of heavy-tailed multi-server queues.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a config and write the report bundle")
    r.add_argument("config")
    r.add_argument("--seed-override", type=_seed_list, metavar="S[,S...]", help="replace the config's seed list")
    r.add_argument("--threads", type=int, default=1, help="seeds simulated concurrently")
    r.add_argument("--force", action="store_true", help="overwrite a run of a different config")
    r.add_argument("--trace", action="store_true", help="write matched big-jump lag tuples")
    r.add_argument("--output", help="output directory (default: the config's output.directory)")

    v = sub.add_parser("verify", help="run an exact property suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])

    b = sub.add_parser("bounds", help="evaluate the analytic bounds of a config (no simulation)")
    b.add_argument("config")
    b.add_argument("--output", help="output directory (default: the config's output.directory)")

    sub.add_parser("version", help="print the package version")
    return p


def _print_verdicts(outcome) -> None:
    for v in outcome.verdicts:
        tag = "PASS" if v.passed else "FAIL"
        if not v.counted:
            tag += " (info)"
        where = "" if v.x is None else f" x={v.x:g}"
        seed = "" if v.seed is None else f" seed={v.seed}"
        print(f"{tag:12s} {v.check}{seed}{where}: {v.detail}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(f"kwqueue {__version__}")
        return EXIT_OK
    if args.command == "verify":
        names = sorted(SUITES) if args.suite == "all" else [args.suite]
        ok = True
        for name in names:
            res = run_suite(name)
            print("\n".join(res.lines()))
            ok &= res.passed
        return EXIT_OK if ok else EXIT_FAIL

    from .experiment import RunRefused, run_experiment, write_bounds

    try:
        exp = ExperimentConfig.load(args.config)
        if args.command == "bounds":
            report, outdir = write_bounds(exp, args.output)
            for row in report.rows():
                print(f"x={row['x']:<10g} lower={row['lower']:<12.6g} upper={row['upper']:<12.6g} "
                      f"asymptotic={row['asymptotic']:.6g}")
            print(f"wrote {os.path.join(outdir, 'bounds.csv')}")
            return EXIT_OK
        outcome = run_experiment(exp, seeds=args.seed_override, threads=args.threads, force=args.force,
                                 trace=args.trace, directory=args.output)
    except (ConfigError, RunRefused, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _print_verdicts(outcome)
    print(f"wrote {outcome.directory}; {'all verdicts pass' if outcome.exit_code == 0 else 'some verdicts FAIL'}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
