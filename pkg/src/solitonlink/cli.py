"""Command-line front end.

Four subcommands: ``budget`` prints the transmitter power ledger, ``run``
executes a sweep and emits result rows as CSV, ``eye`` dumps a folded
magnitude trace for one channel, and ``selftest`` runs the built-in
verification suite.  Exit status is 0 on success, 2 on configuration or
timing errors, 3 when the selftest finds an unhealthy group.
"""

from __future__ import annotations

import argparse
import sys

from .config import (
    ConfigError,
    ScenarioConfig,
    default_config,
    load_config,
    with_full_scale,
)
from .harness import (
    budget_report,
    eye_export,
    rows_to_csv,
    run_scenario,
    summarize,
)
from .selftest import run_selftest
from .transmitter import TimingError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="solitonlink",
        description="multiplexed soliton link simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", metavar="PATH", default=None,
        help="scenario YAML (defaults to the built-in desk-scale scenario)",
    )
    common.add_argument(
        "--out", metavar="PATH", default=None,
        help="write the main output to this file instead of stdout",
    )

    b = sub.add_parser("budget", parents=[common], help="transmitter power ledger")
    b.add_argument("--csv", action="store_true", help="emit CSV instead of a table")

    r = sub.add_parser("run", parents=[common], help="run the configured sweep")
    r.add_argument("--seed", type=int, default=0, metavar="N",
                   help="master seed mixed into every substream (default 0)")
    r.add_argument("--full", action="store_true",
                   help="full-scale bit count instead of the desk scale")
    r.add_argument("--workers", type=int, default=1, metavar="N",
                   help="seeds processed in parallel (default 1)")

    e = sub.add_parser("eye", parents=[common], help="folded magnitude trace")
    e.add_argument("--seed", type=int, default=0, metavar="N")
    e.add_argument("--distance-km", type=float, required=True)
    e.add_argument("--channel", type=int, required=True, help="1..4")
    e.add_argument("--fold", choices=("dt", "tw"), default="tw",
                   help="fold on the pulse spacing or the whole window")

    s = sub.add_parser("selftest", parents=[common],
                       help="verify the numerics against independent oracles")
    s.add_argument("--full", action="store_true",
                   help="larger Monte Carlo samples and longer propagation")
    return p


def _load(args) -> ScenarioConfig:
    if args.config is None:
        return default_config()
    return load_config(args.config)


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "budget":
            cfg = _load(args)
            report, check = budget_report(cfg)
            if args.csv:
                _emit(report.to_csv(), args.out)
            else:
                verdict = "pass" if check.passed else "FAIL"
                lines = [
                    report.format_table(),
                    f"{check.location}: total {check.total_dbm:.4f} dBm, "
                    f"limit {check.limit_dbm:g} dBm, margin {check.margin_db:.4f} dB "
                    f"[{verdict}]",
                ]
                _emit("\n".join(lines), args.out)
            return 0

        if args.command == "run":
            cfg = _load(args)
            if args.full:
                cfg = with_full_scale(cfg)
            rows = run_scenario(cfg, master_seed=args.seed, workers=args.workers)
            summary = summarize(cfg, rows)
            _emit(rows_to_csv(rows), args.out)
            text = summary.format_text(cfg)
            if args.out is None:
                print(text, file=sys.stderr)
            else:
                print(text)
            return 0

        if args.command == "eye":
            cfg = _load(args)
            csv = eye_export(
                cfg, args.distance_km, args.channel,
                fold=args.fold, master_seed=args.seed,
            )
            _emit(csv, args.out)
            return 0

        if args.command == "selftest":
            report = run_selftest(full=args.full)
            _emit(report.format_text(), args.out)
            return 0 if report.all_ok else 3

    except (ConfigError, TimingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
