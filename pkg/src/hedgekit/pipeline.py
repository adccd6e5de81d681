"""Comparison runs: prices -> decay calibration -> sample -> methods -> report."""

from __future__ import annotations

import configparser
import csv
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .betavae import VaeConfig, dump_model
from .evaluation import evaluate
from .exceptions import ConfigError, DataError, HedgeKitError
from .marketdata import load_cost_csv, load_price_csv, to_returns
from .methods import COST_METHODS, METHODS, PENALIZED, run_method
from .regularized import RegularizationSpec, cross_validate_lambda, parse_cv_ladder
from .sampler import DecayModel, SamplePlan, calibrate_decay, draw_sample

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
SECTION = "hedgekit"


@dataclass
class RunConfig:
    prices_path: str
    target: str
    costs_path: Optional[str] = None
    methods: tuple = METHODS
    lam: float = 1e-4
    window: int = 100
    samples: int = 1000
    seed: int = 0
    decay: str = "auto"
    output_dir: str = "hedgekit-out"
    standardize: bool = False
    cv: Optional[str] = None
    vae_hidden: tuple = (16, 8)
    vae_beta: float = 0.1
    vae_epochs: int = 5000
    vae_restarts: int = 1

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        self.methods = tuple(self.methods)
        if isinstance(self.vae_hidden, str):
            self.vae_hidden = tuple(int(h) for h in self.vae_hidden.split(",") if h.strip())
        self.vae_hidden = tuple(int(h) for h in self.vae_hidden)
        self.validate()

    def validate(self):
        if not self.methods:
            raise ConfigError("no methods selected")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods")
        needs_cost = [m for m in self.methods if m in COST_METHODS]
        if needs_cost and not self.costs_path:
            raise ConfigError(
                f"methods {needs_cost} need a unit-cost file: pass --costs <costs.csv> "
                "(header 'variable,cost')"
            )
        if self.standardize and self.costs_path and needs_cost:
            raise ConfigError("--standardize cannot be combined with cost-adjusted methods")
        if not self.lam >= 0:
            raise ConfigError("--lambda must be non-negative")
        if self.window < 2 or self.samples < 1:
            raise ConfigError("--window must be >= 2 and --samples >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if self.vae_restarts < 1 or self.vae_epochs < 1:
            raise ConfigError("--vae-restarts and --vae-epochs must be >= 1")
        if self.decay != "auto":
            try:
                value = float(self.decay)
            except ValueError:
                raise ConfigError(f"--decay must be 'auto' or a number, got {self.decay!r}") from None
            if not 0 < value <= 1:
                raise ConfigError("--decay must lie in (0, 1]")
        if self.cv:
            parse_cv_ladder(self.cv)

    def vae_config(self) -> VaeConfig:
        return VaeConfig(hidden_layers=self.vae_hidden, beta_hat=self.vae_beta,
                         epochs=self.vae_epochs, seed=self.seed)

    # -- plain-text config ---------------------------------------------------

    def to_config(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        cp[SECTION] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name in ("prices_path", "costs_path", "output_dir"):
                value = str(Path(value).resolve())
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            cp[SECTION][f.name] = str(value) if not isinstance(value, float) else repr(value)
        return cp


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_ALIASES = {"prices": "prices_path", "costs": "costs_path", "lambda": "lam",
            "method": "methods", "output": "output_dir"}


def coerce_option(name: str, raw):
    name = _ALIASES.get(name.replace("-", "_"), name.replace("-", "_"))
    if name not in _TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return name, raw
    kind = _TYPES[name]
    try:
        if kind == "float":
            return name, float(raw)
        if kind == "int":
            return name, int(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return name, low in ("true", "1", "yes")
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return name, raw.strip()


def read_config_file(path) -> dict:
    """Options from the ``[hedgekit]`` section of an INI-style file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if SECTION not in cp:
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    return dict(coerce_option(k, v) for k, v in cp[SECTION].items())


# -- run ------------------------------------------------------------------------

@dataclass
class RunOutcome:
    status: int
    report_path: Optional[Path] = None
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    decay: Optional[DecayModel] = None


def _fmt(value):
    return "NA" if value is None or not np.isfinite(value) else f"{value:.6f}"


def write_report(path, names, methods, betas: dict, r2: dict):
    """Hedge-ratio table: one row per instrument (sorted) and a final R2 row."""
    order = sorted(range(len(names)), key=lambda j: names[j])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", *methods])
        for j in order:
            writer.writerow([names[j], *(
                _fmt(betas[m][j]) if m in betas else "NA" for m in methods)])
        writer.writerow(["R2", *(_fmt(r2.get(m)) for m in methods)])


def _resolve_costs(cfg, names):
    if not cfg.costs_path:
        return None
    path = Path(cfg.costs_path)
    if not path.is_file():
        raise DataError(f"cost file not found: {path}")
    table = load_cost_csv(path)
    missing = [n for n in names if n not in table]
    if missing:
        raise DataError(f"{path}: no cost for instruments {missing}")
    costs = np.array([table[n] for n in names], dtype=float)
    if np.any(costs <= 0):
        bad = [n for n, c in zip(names, costs) if c <= 0]
        raise DataError(f"{path}: unit costs must be positive; check {bad}")
    return costs


def prepare(cfg: RunConfig):
    """Load, calibrate and sample. Returns ``(returns, decay, centered_sample, costs)``."""
    path = Path(cfg.prices_path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    returns = to_returns(load_price_csv(path), cfg.target)
    costs = _resolve_costs(cfg, returns.instrument_names)
    if cfg.decay == "auto":
        decay = calibrate_decay(returns, cfg.window)
    else:
        decay = DecayModel.fixed(float(cfg.decay))
    sample = draw_sample(returns, SamplePlan(cfg.samples, cfg.seed, decay))
    return returns, decay, sample.centered(), costs


def run_compare(cfg: RunConfig) -> RunOutcome:
    """Run every configured method and write report, diagnostics and manifest.

    A method that fails is reported as ``NA`` and the run exits with the
    solver status; the remaining methods still complete.
    """
    try:
        returns, decay, panel, costs = prepare(cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return RunOutcome(EXIT_CONFIG, failures={"_": str(exc)})
    except HedgeKitError as exc:
        log.error("%s", exc)
        return RunOutcome(EXIT_DATA, failures={"_": str(exc)})

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = returns.instrument_names

    cv_folds, cv_ladder = parse_cv_ladder(cfg.cv) if cfg.cv else (None, None)
    results, evals, failures, lambdas = {}, {}, {}, {}
    for method in cfg.methods:
        lam = cfg.lam
        try:
            if cv_ladder and method in PENALIZED:
                penalty = "l1" if method.startswith("lasso") else "l2"
                psi = None
                if method.endswith("-cost"):
                    from .methods import relative_costs
                    psi = tuple(relative_costs(costs))
                spec = RegularizationSpec(penalty, 0.0, psi,
                                          standardize=cfg.standardize and psi is None)
                lam, _ = cross_validate_lambda(returns.centered(), spec, cv_ladder,
                                               cv_folds, decay.alpha_decay)
            lambdas[method] = lam
            res = run_method(method, panel, lam=lam, costs=costs, standardize=cfg.standardize,
                             vae_config=cfg.vae_config(), vae_restarts=cfg.vae_restarts)
            evals[method] = evaluate(panel, res.beta, costs)
            results[method] = res
        except HedgeKitError as exc:
            log.warning("method %s failed: %s", method, exc)
            failures[method] = f"{type(exc).__name__}: {exc}"
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("method %s failed: %s", method, exc)
            failures[method] = f"{type(exc).__name__}: {exc}"

    betas = {m: r.beta for m, r in results.items()}
    r2 = {m: e.r_squared for m, e in evals.items()}
    report_path = out / "report.csv"
    write_report(report_path, names, cfg.methods, betas, r2)
    _write_diagnostics(out / "diagnostics.jsonl", cfg.methods, results, evals, failures, lambdas)
    _write_residuals(out / "residuals.csv", cfg.methods, evals)
    if "vae" in results:
        dump_model(results["vae"].extra["_model"], out / "vae_model.txt")
    _write_manifest(out / "manifest.ini", cfg, decay, panel, results, failures, lambdas)

    status = EXIT_SOLVER if failures else EXIT_OK
    return RunOutcome(status, report_path, results, failures, decay)


def _jsonable(extra):
    return {k: v for k, v in extra.items() if not k.startswith("_")}


def _write_diagnostics(path, methods, results, evals, failures, lambdas):
    with Path(path).open("w", encoding="utf-8") as fh:
        for m in methods:
            row = {"method": m}
            if m in failures:
                row.update(status="failed", error=failures[m])
            else:
                res = results[m]
                row.update(status="ok", iterations=res.iterations, converged=res.converged)
                row.update(evals[m].to_dict())
                row.update(_jsonable(res.extra))
            if m in lambdas and m in ("lasso", "lasso-cost", "ridge", "ridge-cost"):
                row["lambda"] = lambdas[m]
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_residuals(path, methods, evals):
    """Hedged PnL per sampled row and method (residual plus cost), for boxplots."""
    done = [m for m in methods if m in evals]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", *done])
        if not done:
            return
        columns = [evals[m].shifted_residuals for m in done]
        for i in range(len(columns[0])):
            writer.writerow([i, *(f"{c[i]:.10g}" for c in columns)])


def _write_manifest(path, cfg, decay, panel, results, failures, lambdas):
    cp = cfg.to_config()
    cp["results"] = {
        "version": __version__,
        "rng": "numpy PCG64",
        "alpha_decay": repr(decay.alpha_decay),
        "decay_component_alphas": ",".join(repr(a) for a in decay.component_alphas),
        "decay_pit_stat": repr(decay.pit_stat),
        "sample_rows": str(panel.n_obs),
    }
    for m in cfg.methods:
        if m in results:
            cp["results"][f"{m}.iterations"] = str(results[m].iterations)
            cp["results"][f"{m}.converged"] = str(results[m].converged)
        else:
            cp["results"][f"{m}.status"] = "failed"
        if m in lambdas and m in PENALIZED:
            cp["results"][f"{m}.lambda"] = repr(lambdas[m])
    with Path(path).open("w", encoding="utf-8") as fh:
        cp.write(fh)
