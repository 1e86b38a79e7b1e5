"""Command-line interface.

Subcommands mirror the study artifacts: ``gn`` (model oracle), ``ssfm``
(simulation measurements), ``fit`` (estimation), ``sweep`` (everything),
``compare`` (per-category dB differences between two result files) and
``selftest`` (invariant suite). Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, Scenario, parse_config
from .runner import ResultSet, compare, run_scenario
from .selftest import run_selftest

_MODE_FOR_COMMAND = {"gn": "gn", "ssfm": "ssfm", "fit": "ssfm", "sweep": "both"}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario config file")
    common.add_argument("--out", metavar="PATH", help="output CSV (stdout when omitted)")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--threads", type=int,
                        help="parallel workers (falls back to FWNL_THREADS)")
    common.add_argument("--mode", choices=("gn", "ssfm", "both"),
                        help="override the scenario mode")
    common.add_argument("--fit", choices=("nsr", "apsd"), dest="fit_kind",
                        help="measurement domain to fit")
    common.add_argument("--constant-power", action="store_true", default=None,
                        help="use constant-total-power perturbation pairs")

    parser = argparse.ArgumentParser(
        prog="fwnl",
        description="ASE / four-wave-mixing noise-category separation via "
                    "spectral perturbations")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gn", parents=[common], help="direct GN-model category table")
    sub.add_parser("ssfm", parents=[common], help="split-step measurements per instance")
    sub.add_parser("fit", parents=[common], help="split-step measurements plus fit")
    sub.add_parser("sweep", parents=[common], help="GN table, measurements and fit")

    cmp_p = sub.add_parser("compare", help="per-category dB differences of two CSVs")
    cmp_p.add_argument("file_a")
    cmp_p.add_argument("file_b")
    cmp_p.add_argument("--mode-a", default="fit")
    cmp_p.add_argument("--mode-b", default="gn")
    cmp_p.add_argument("--out", metavar="PATH")

    sub.add_parser("selftest", help="run the invariant suite")
    return parser


def _scenario_from_args(args) -> Scenario:
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        sc = parse_config(text)
    else:
        sc = Scenario()
    sc.mode = args.mode or _MODE_FOR_COMMAND[args.command]
    if args.fit_kind:
        sc.fit = args.fit_kind
    if args.constant_power is not None:
        sc.constant_power = args.constant_power
    if args.seed is not None:
        sc.seed = args.seed
    if args.threads is not None:
        sc.threads = args.threads
    elif os.environ.get("FWNL_THREADS"):
        try:
            sc.threads = int(os.environ["FWNL_THREADS"])
        except ValueError:
            raise ConfigError(
                f"FWNL_THREADS must be an integer, got {os.environ['FWNL_THREADS']!r}")
    if args.out:
        sc.out = args.out
    return sc.validate()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_compare(args) -> int:
    rs_a = ResultSet.from_csv(args.file_a)
    rs_b = ResultSet.from_csv(args.file_b)
    diffs = compare(rs_a, rs_b, mode_a=args.mode_a, mode_b=args.mode_b)
    lines = ["span_count,category,diff_db"]
    lines += [f"{span},\"{cat}\",{diff:.6f}" for span, cat, diff in diffs]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return 0 if run_selftest() else 3
        if args.command == "compare":
            return _run_compare(args)
        sc = _scenario_from_args(args)
        if args.command == "ssfm":
            sc.fit_enabled = False
        results = run_scenario(sc)
        _emit(results.to_csv_text(), sc.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
