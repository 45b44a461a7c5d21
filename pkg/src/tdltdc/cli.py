"""Command-line interface: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import (
    MissingInputError,
    run_collect,
    run_configure,
    run_density,
    run_interval,
    run_report,
)
from .runconfig import ConfigError, RunConfig, load_config, with_overrides

_STAGES = {
    "collect": run_collect,
    "configure": run_configure,
    "density": run_density,
    "interval": run_interval,
    "report": run_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdltdc",
        description=(
            "Simulate a tapped-delay-line time digitizer, calibrate its "
            "binning, and characterize the result."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "collect": "sample the delay line and build the state catalog",
        "configure": "sweep reference widths and select bin configurations",
        "density": "run uniform-illumination histograms and linearity",
        "interval": "sweep a programmed delay across the measured range",
        "report": "merge stage summaries into one report",
    }
    for name in _STAGES:
        cmd = sub.add_parser(name, help=help_text[name])
        cmd.add_argument(
            "--config",
            type=Path,
            default=None,
            metavar="PATH",
            help="run configuration file (defaults apply when omitted)",
        )
        cmd.add_argument(
            "--out",
            type=Path,
            required=True,
            metavar="DIR",
            help="output directory shared by all stages of a run",
        )
        cmd.add_argument(
            "--seed",
            type=int,
            default=None,
            metavar="N",
            help="override the master seed from the configuration",
        )
        cmd.add_argument(
            "--lsb",
            type=str,
            default=None,
            metavar="LIST",
            help="comma-separated target bin widths in fs, overriding "
            "the configuration",
        )
    return parser


def _parse_lsb_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"--lsb expects comma-separated integers, got {text!r}")
    if not values:
        raise ConfigError("--lsb lists no targets")
    return values


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = with_overrides(
            config,
            master_seed=args.seed,
            target_lsb_fs=_parse_lsb_list(args.lsb) if args.lsb else None,
        )
        _STAGES[args.command](config, args.out)
    except ConfigError as exc:
        print(f"tdltdc: error: config: {exc}", file=sys.stderr)
        return 2
    except MissingInputError as exc:
        print(f"tdltdc: error: missing-input: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"tdltdc: error: run: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
