"""``hedgekit`` command line.

Commands: ``compute`` (one method), ``compare`` (several methods side by side),
``calibrate-decay`` and ``synth``. Every run option can also come from an
INI-style file given with ``--config``; flags override file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, DataError, HedgeKitError, SolverError
from .marketdata import load_price_csv, to_returns, write_cost_csv, write_price_csv
from .methods import METHODS
from .pipeline import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    EXIT_SOLVER,
    RunConfig,
    coerce_option,
    read_config_file,
    run_compare,
)
from .sampler import DEFAULT_GRID, calibrate_decay
from .synth import DEFAULT_SEED, generate_costs, generate_prices

log = logging.getLogger("hedgekit")


def _run_options(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="INI file with a [hedgekit] section")
    p.add_argument("--prices", dest="prices_path", default=s, help="wide price CSV")
    p.add_argument("--target", default=s, help="column to hedge")
    p.add_argument("--costs", dest="costs_path", default=s, help="unit-cost CSV (variable,cost)")
    p.add_argument("--lambda", dest="lam", type=float, default=s, help="penalty strength")
    p.add_argument("--window", type=int, default=s, help="PIT window for decay calibration")
    p.add_argument("--samples", type=int, default=s, help="rows to bootstrap")
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--decay", default=s, help="'auto' or a fixed factor in (0, 1]")
    p.add_argument("--output-dir", dest="output_dir", default=s)
    p.add_argument("--standardize", action="store_true", default=s,
                   help="unit-variance columns before penalizing (diagnostic)")
    p.add_argument("--cv", default=s, help="cross-validate lambda, e.g. '5:1e-5,1e-4,1e-3'")
    p.add_argument("--vae-hidden", dest="vae_hidden", default=s, help="encoder widths, e.g. 16,8")
    p.add_argument("--vae-beta", dest="vae_beta", type=float, default=s, help="KL weight")
    p.add_argument("--vae-epochs", dest="vae_epochs", type=int, default=s)
    p.add_argument("--vae-restarts", dest="vae_restarts", type=int, default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hedgekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hedgekit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="hedge ratios from one method")
    _run_options(p)
    p.add_argument("--method", dest="methods", choices=METHODS, default=argparse.SUPPRESS)

    p = sub.add_parser("compare", help="side-by-side report over several methods")
    _run_options(p)
    p.add_argument("--methods", default=argparse.SUPPRESS,
                   help=f"comma-separated subset of {','.join(METHODS)} (default: all)")

    p = sub.add_parser("calibrate-decay", help="fit the sampling decay factor")
    p.add_argument("--prices", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--grid", default=None, help="'lo:hi:count' or comma-separated values")

    p = sub.add_parser("synth", help="write the bundled synthetic price and cost files")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--rows", type=int, default=1000, help="number of returns (prices = rows + 1)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def _merge(args) -> RunConfig:
    opts = {}
    given = vars(args).copy()
    for key in ("command", "verbose"):
        given.pop(key, None)
    if "config" in given:
        opts.update(read_config_file(given.pop("config")))
    for key, value in given.items():
        name, value = coerce_option(key, value)
        opts[name] = value
    missing = [k for k in ("prices_path", "target") if k not in opts]
    if missing:
        flags = ", ".join("--" + {"prices_path": "prices"}.get(k, k) for k in missing)
        raise ConfigError(f"missing required option(s): {flags}")
    return RunConfig(**opts)


def _parse_grid(text):
    if text is None:
        return DEFAULT_GRID
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return tuple(np.round(np.linspace(float(lo), float(hi), int(count)), 10).tolist())
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --grid {text!r}") from None


def _cmd_run(args, single):
    cfg = _merge(args)
    if single and len(cfg.methods) != 1:
        raise ConfigError("compute runs exactly one --method")
    outcome = run_compare(cfg)
    if outcome.report_path is not None:
        sys.stdout.write(outcome.report_path.read_text(encoding="utf-8"))
        print(f"wrote {outcome.report_path.parent}", file=sys.stderr)
    for method, err in outcome.failures.items():
        print(f"hedgekit: {method if method != '_' else 'error'}: {err}", file=sys.stderr)
    return outcome.status


def _cmd_calibrate(args):
    returns = to_returns(load_price_csv(args.prices), args.target)
    model = calibrate_decay(returns, args.window, _parse_grid(args.grid))
    print(json.dumps(model.to_dict(), indent=2))
    return EXIT_OK


def _cmd_synth(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = generate_prices(args.rows, args.seed)
    write_price_csv(out / "prices.csv", panel.dates, panel.columns, panel.prices)
    write_cost_csv(out / "costs.csv", generate_costs(args.seed))
    print(out / "prices.csv")
    print(out / "costs.csv")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="hedgekit: %(message)s")
    command = args.command
    try:
        if command == "compute":
            return _cmd_run(args, single=True)
        if command == "compare":
            return _cmd_run(args, single=False)
        if command == "calibrate-decay":
            return _cmd_calibrate(args)
        return _cmd_synth(args)
    except ConfigError as exc:
        print(f"hedgekit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"hedgekit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"hedgekit: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HedgeKitError as exc:
        print(f"hedgekit: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
