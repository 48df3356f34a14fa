"""Command-line front end.

Subcommands pick which method families are evaluated. ``figure`` runs a
preset with everything and ``validate`` does the same while always
printing the comparison report. Any bound-ordering violation fails the
run. Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 validation failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import (
    ANALYTIC,
    BOUNDS,
    METHODS,
    SIMULATION,
    ConfigError,
    compare_report,
    load_config,
    preset,
    rows_to_csv,
    rows_to_gnuplot,
    run,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

_FAMILIES = {
    "simulate": SIMULATION,
    "analytic": ANALYTIC,
    "bounds": BOUNDS,
    "power-opt": frozenset({"clt_quadrature"}),
    "figure": frozenset(METHODS),
    "validate": frozenset(METHODS),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file, one section per experiment")
    common.add_argument("--preset", help="figure setup, fig3 ... fig11")
    common.add_argument("--seed", type=int, help="unsigned 64-bit run seed")
    common.add_argument("--trials", type=int, help="Monte Carlo packets per SNR knot")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="parallel SNR points")
    common.add_argument("--report", action="store_true", help="print the comparison report to stderr")

    p = argparse.ArgumentParser(prog="rffso", description="RF-FSO HARQ outage and throughput experiments")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "Monte Carlo only",
        "analytic": "CLT quadrature and closed-form approximations",
        "bounds": "small-N Gamma-Gamma bounds (with Monte Carlo reference)",
        "power-opt": "power allocation sweep",
        "figure": "all methods for a figure preset",
        "validate": "all methods plus the comparison report",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return p


def _specs(args):
    if bool(args.config) == bool(args.preset):
        raise ConfigError("arguments", "give exactly one of --config or --preset")
    if args.trials is not None and args.trials < 1000:
        raise ConfigError("--trials", "must be >= 1000")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed", "must be an unsigned 64-bit integer")
    if args.config:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        specs = load_config(text)
        over = {}
        if args.trials is not None:
            over["trials"] = args.trials
        if args.seed is not None:
            over["seed"] = args.seed
        specs = [replace(s, **over) for s in specs]
    else:
        specs = preset(args.preset, trials=args.trials, seed=args.seed)
    if args.command == "power-opt":
        for s in specs:
            if s.scenario not in ("fig11_power_alloc", "custom"):
                raise ConfigError("scenario", "power-opt needs a fig11_power_alloc or custom scenario")
        specs = [replace(s, scenario="fig11_power_alloc") for s in specs]
    fam = _FAMILIES[args.command]
    if args.command == "bounds":
        fam = fam | SIMULATION
    return [replace(s, methods=s.methods & fam) for s in specs]


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        specs = _specs(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows, violations, errors = [], [], []
    for spec in specs:
        res = run(spec, workers=max(1, args.workers))
        rows += res.rows
        violations += res.violations
        errors += res.errors

    text = rows_to_csv(rows) if args.format == "csv" else rows_to_gnuplot(rows)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)

    report, _ = compare_report(rows)
    if args.report or args.command == "validate":
        sys.stderr.write(report)
    print(f"validation: {len(violations)} bound-ordering violations, {len(errors)} failed points",
          file=sys.stderr)
    for v in violations:
        print(f"  violation {v}", file=sys.stderr)
    for e in errors:
        print(f"  error {e}", file=sys.stderr)
    if violations:
        return EXIT_VALIDATION
    if errors:
        return EXIT_NUMERIC
    return EXIT_OK


def main_entry() -> None:
    sys.exit(main())
