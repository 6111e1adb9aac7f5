"""Command line entry point: ``gti run | bench | schedule | truth``."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import __version__
from .errors import ConfigurationError, GTIError, OracleResolutionError
from .harness import load_config, run_document
from .ladder import make_schedule
from .models import MODEL_NAMES, BananaModel, ConjugateNormalModel, GaussianModel, banana_truth

log = logging.getLogger("gti")


def _parse_params(items):
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"parameters look like key=value, got {item!r}")
        try:
            params[key] = int(value)
        except ValueError:
            try:
                params[key] = float(value)
            except ValueError as exc:
                raise ConfigurationError(f"parameter {key} must be numeric, got {value!r}") from exc
    return params


def cmd_run(args, sweep=False):
    doc = load_config(args.config)
    out = args.out or "gti-output"
    records, summary, paths = run_document(doc, out, workers=args.workers, sweep=sweep)
    for row in summary:
        print(
            f"{row['method']:>14s}  E={row['E']:<9d} ok={row['n_ok']:<4d} failed={row['n_failed']:<3d}"
            f" median_rse={row['median_rse']:.4g}  q25={row['q25_rse']:.4g}  q75={row['q75_rse']:.4g}"
        )
    print(f"wrote {paths['records']} ({len(records)} records)")
    return 0


def cmd_schedule(args):
    for b in make_schedule(args.n, args.power).betas:
        print(repr(float(b)))
    return 0


def cmd_truth(args):
    params = _parse_params(args.params)
    if args.model == "gaussian":
        m = GaussianModel(float(params.get("y", 2.0)), int(params.get("d", params.get("D", 10))))
        print(repr(m.truth()))
    elif args.model == "banana":
        if "grid_n" in params:
            oracle = banana_truth(int(params["grid_n"]))
            print(repr(float(oracle.value)))
            print(f"# relative error estimate {oracle.rel_error:.3g} at grid_n={oracle.grid_n}", file=sys.stderr)
        else:
            print(repr(BananaModel.REFERENCE_TRUTH))
    elif args.model == "conjugate":
        # the evidence Z of the one-dimensional conjugate normal model
        print(repr(math.exp(ConjugateNormalModel(float(params.get("y", 1.0))).log_evidence())))
    else:
        raise ConfigurationError(f"unknown model {args.model!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gti", description="Generalized thermodynamic integration benchmarks")
    p.add_argument("--version", action="version", version=f"gti {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run one method from a config file"),
                        ("bench", "run a budget sweep over one or more methods")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="YAML or JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default ./gti-output)")
        sp.add_argument("--workers", type=int, default=None, help="worker processes")

    sp = sub.add_parser("schedule", help="print the powered-fraction temperature ladder")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--power", type=float, default=5.0)

    sp = sub.add_parser("truth", help="print a model's ground-truth value")
    sp.add_argument("--model", required=True, choices=MODEL_NAMES)
    sp.add_argument("params", nargs="*", help="model parameters as key=value (y=2 d=10, grid_n=4000)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "bench":
            return cmd_run(args, sweep=True)
        if args.command == "schedule":
            return cmd_schedule(args)
        return cmd_truth(args)
    except OracleResolutionError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except GTIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
