"""One entry point per hedging method, keyed by its CLI name."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import betavae, factors, regularized
from .exceptions import ConfigError, HeywoodCase, NotConverged
from .marketdata import ReturnPanel

METHODS = ("ols", "lasso", "lasso-cost", "ridge", "ridge-cost", "pca", "fa", "fa-varimax", "vae")
COST_METHODS = ("lasso-cost", "ridge-cost")
PENALIZED = ("lasso", "lasso-cost", "ridge", "ridge-cost")


@dataclass
class MethodResult:
    method: str
    beta: np.ndarray
    iterations: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)


def relative_costs(costs) -> np.ndarray:
    """Unit costs rescaled to mean one; only relative costs matter to the penalty."""
    costs = np.asarray(costs, dtype=float)
    return costs / costs.mean()


def run_method(method: str, panel: ReturnPanel, lam: float = 0.0, costs=None,
               standardize: bool = False, vae_config: Optional[betavae.VaeConfig] = None,
               vae_restarts: int = 1) -> MethodResult:
    """Fit one method on ``panel`` and return its hedge ratios.

    ``costs`` are absolute unit costs; cost-aware methods use them in
    relative form.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    caught = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = _dispatch(method, panel, lam, costs, standardize, vae_config, vae_restarts)
    notes = [str(w.message) for w in caught
             if issubclass(w.category, (NotConverged, HeywoodCase))]
    if notes:
        result.extra["warnings"] = notes
    return result


def _dispatch(method, panel, lam, costs, standardize, vae_config, vae_restarts):
    if method in PENALIZED or method == "ols":
        if method in COST_METHODS:
            if costs is None:
                raise ConfigError(f"method {method} needs unit costs (--costs)")
            psi = tuple(relative_costs(costs))
        else:
            psi = None
        penalty = {"ols": "none", "lasso": "l1", "lasso-cost": "l1"}.get(method, "l2")
        spec = regularized.RegularizationSpec(
            penalty=penalty, lam=0.0 if method == "ols" else lam, costs=psi,
            standardize=standardize and psi is None and method != "ols",
        )
        fit = regularized.fit(panel, spec)
        extra = {"lambda": spec.lam}
        if penalty == "l1":
            extra["nonzero"] = int(np.count_nonzero(fit.beta))
        return MethodResult(method, fit.beta, fit.iterations, fit.converged, extra)

    if method in ("pca", "fa", "fa-varimax"):
        beta, decomp = factors.factor_hedge(panel, method)
        extra = {"condition_number": decomp.condition_number,
                 "explained_variance": [float(v) for v in decomp.explained_variance]}
        if "iterations" in decomp.meta:
            extra["heywood"] = decomp.meta["heywood"]
        return MethodResult(method, beta, int(decomp.meta.get("iterations", 0)), True, extra)

    cfg = vae_config or betavae.VaeConfig()
    model, betas = betavae.train_restarts(panel, cfg, vae_restarts)
    beta = betavae.extract_hedge_vae(model)
    extra = {
        "seed": int(model.config.seed),
        "final_recon": model.history["recon"][-1],
        "final_kl": model.history["kl"][-1],
        "condition_number": float(np.linalg.cond(model.gamma)),
    }
    if vae_restarts > 1:
        extra["restart_betas"] = betas.tolist()
        extra["beta_std"] = np.nanstd(betas, axis=0).tolist()
    result = MethodResult(method, beta, int(cfg.epochs), True, extra)
    result.extra["_model"] = model
    return result
