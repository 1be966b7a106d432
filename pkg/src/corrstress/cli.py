"""Command-line entry point: ``corrstress {calibrate,stress,figures,price-tranche}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import credit_pricing as cp
from .pipeline import (FigureConfig, InputError, PipelineError, RunConfig, _parse_floats,
                       emit_figure_data, read_key_values, run_calibration, run_stress,
                       write_calibration)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags below take precedence")
    for name in RunConfig.field_types():
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar="VALUE")


def _run_config(args: argparse.Namespace) -> RunConfig:
    values = read_key_values(args.config) if args.config else {}
    values.update({k: getattr(args, k) for k in RunConfig.field_types()
                   if getattr(args, k) is not None})
    return RunConfig.from_mapping(values)


def _figure_config(args: argparse.Namespace) -> FigureConfig:
    cfg = FigureConfig(output_dir=args.output_dir)
    changes = {}
    if args.sigma is not None:
        changes["sigma"] = args.sigma
    if args.m_max is not None:
        changes["m_values"] = tuple(range(1, args.m_max + 1))
    if args.nu_values is not None:
        changes["nu_values"] = _parse_floats(args.nu_values)
    if args.quantiles is not None:
        changes["quantile_values"] = _parse_floats(args.quantiles)
    return dataclasses.replace(cfg, **changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrstress", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="rolling coefficient calibration and change distribution")
    _add_run_flags(p)
    p = sub.add_parser("stress", help="worst-case correlation and joint stress report")
    _add_run_flags(p)

    p = sub.add_parser("figures", help="CSV chart grids for the homogeneous portfolio")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--sigma", type=float, help="annualised asset volatility")
    p.add_argument("--m-max", type=int)
    p.add_argument("--nu-values", help="comma-separated")
    p.add_argument("--quantiles", help="comma-separated Mahalanobis quantiles")

    p = sub.add_parser("price-tranche", help="expected loss and equivalent spread of a tranche")
    for flag in ("k1", "k2", "upfront", "running", "base-corr-k1", "base-corr-k2",
                 "index-spread", "maturity"):
        p.add_argument("--" + flag, type=float, required=True)
    p.add_argument("--recovery", type=float, default=0.4)
    p.add_argument("--rate", type=float, default=0.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "calibrate":
            cfg = _run_config(args)
            for path in write_calibration(run_calibration(cfg), cfg.output_dir):
                print(path)
        elif args.command == "stress":
            report = run_stress(_run_config(args))
            print(report.table().to_string(index=False))
        elif args.command == "figures":
            for path in emit_figure_data(_figure_config(args)):
                print(path)
        else:
            q = cp.TrancheQuote(args.k1, args.k2, args.upfront, args.running, args.base_corr_k1,
                                args.base_corr_k2, args.index_spread, args.maturity,
                                args.recovery, args.rate)
            out = {"expected_loss": cp.tranche_expected_loss(q),
                   "survival_at_maturity": cp.tranche_survival_at_maturity(q),
                   "equivalent_spread": cp.tranche_equivalent_spread(q)}
            print(json.dumps(out, indent=2))
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
