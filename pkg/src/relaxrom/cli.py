"""Command line driver: ``relaxrom <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .circulant import SingularMatrixError
from .experiments import (PRESETS, ConfigError, parse_config, run_compare_fv, run_full,
                          run_pod, run_reduced)
from .fom import SolverError
from .reference import RiccatiBlowUp

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("relaxrom")


def _times(text: str):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--times expects comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="relaxrom",
        description="Relaxation-system solver in translated bases with POD model reduction.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_basis=False):
        sp.add_argument("--config", metavar="PATH", help="config file of [section] blocks")
        sp.add_argument("--preset", metavar="NAME",
                        help="preset name, or section of --config")
        sp.add_argument("--out", metavar="DIR", default="out", help="output directory")
        sp.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                        help="set a config field (repeatable)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if with_basis:
            sp.add_argument("--basis", metavar="DIR",
                            help="directory holding basis_plus.txt / basis_minus.txt; "
                                 "trained on the fly when omitted")

    sp = sub.add_parser("run-full", help="full-order run with CSV output")
    common(sp)
    sp.add_argument("--times", type=_times, default=None,
                    help="comma-separated output times (default: 0 and T)")
    common(sub.add_parser("run-pod", help="train a POD basis and export singular values"))
    common(sub.add_parser("run-reduced", help="reduced run compared with full and reference"),
           with_basis=True)
    common(sub.add_parser("compare-fv", help="full model against the finite-volume reference"),
           with_basis=True)
    sub.add_parser("list-presets", help="print the built-in presets")
    return p


def _list_presets() -> None:
    for name, values in PRESETS.items():
        print(f"[{name}]")
        for k, v in values.items():
            if isinstance(v, tuple):
                v = ",".join(v)
            print(f"{k} = {v}")
        print()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        _list_presets()
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.config is None and args.preset is None:
        print("error: give --preset NAME or --config PATH", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config, args.preset, args.override)
        with np.errstate(over="ignore", invalid="ignore"):
            if args.command == "run-full":
                report = run_full(cfg, args.out, args.times)
            elif args.command == "run-pod":
                report = run_pod(cfg, args.out)
            elif args.command == "run-reduced":
                report = run_reduced(cfg, args.out, args.basis)
            else:
                report = run_compare_fv(cfg, args.out, args.basis)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SingularMatrixError, FloatingPointError, RiccatiBlowUp) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for label, n in report.norms.items():
        log.info("%s: L1=%.4e L2=%.4e Linf=%.4e", label, n["L1"], n["L2"], n["Linf"])
    for key, val in report.values.items():
        log.info("%s = %.6g", key, val)
    log.info("wrote %d files to %s", len(report.files), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
