"""Hedge evaluation: unit costs, R^2, residual statistics and 99% VaR."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError, LengthMismatch, TooFewResiduals
from .marketdata import ReturnPanel

VAR_LEVEL = 0.01
MIN_VAR_RESIDUALS = 100


@dataclass(frozen=True)
class CostInputs:
    funding_rate: float
    expected_spread: float
    ask_price: float

    def __post_init__(self):
        if not self.ask_price > 0:
            raise ConfigError("ask price must be positive")
        if not self.expected_spread >= 0:
            raise ConfigError("expected bid-ask spread must be non-negative")
        if not self.funding_rate >= 0:
            raise ConfigError("funding rate must be non-negative")

    @classmethod
    def from_quotes(cls, funding_rate, bid, ask):
        """Use an observed bid/ask pair as the expected spread."""
        return cls(funding_rate, ask - bid, ask)


def unit_cost(inputs: CostInputs) -> float:
    """Funding rate plus expected spread per unit of ask price."""
    return inputs.funding_rate + inputs.expected_spread / inputs.ask_price


def r_squared(y, y_hat) -> float:
    """Squared Pearson correlation of ``y`` and ``y_hat``; 0 if either is constant."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise LengthMismatch(f"shapes differ: {y.shape} vs {y_hat.shape}")
    if y.size < 2:
        raise LengthMismatch("need at least two points")
    yc = y - y.mean()
    hc = y_hat - y_hat.mean()
    syy, shh = float(yc @ yc), float(hc @ hc)
    if shh == 0.0 or syy == 0.0:
        return 0.0
    sxy = float(yc @ hc)
    # products rather than ** keep r_squared(y, y) exactly 1
    return min(1.0, (sxy * sxy) / (syy * shh))


def empirical_quantile(values, q):
    """Linear interpolation between order statistics at position ``(n-1) q``."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def var_99(residuals, total_cost: float = 0.0) -> float:
    """1% quantile of ``residuals + total_cost`` (a loss is negative)."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size < MIN_VAR_RESIDUALS:
        raise TooFewResiduals(
            f"VaR needs at least {MIN_VAR_RESIDUALS} residuals, got {residuals.size}"
        )
    return empirical_quantile(residuals + total_cost, VAR_LEVEL)


def hedge_cost(beta, costs) -> float:
    """Deterministic PnL drag ``-sum(psi_j |beta_j|)``."""
    if costs is None:
        return 0.0
    beta = np.asarray(beta, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if costs.shape != beta.shape:
        raise LengthMismatch(f"{costs.size} costs for {beta.size} hedge ratios")
    return -float(np.sum(costs * np.abs(beta)))


def five_number(values) -> dict:
    values = np.asarray(values, dtype=float)
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))


@dataclass(frozen=True)
class EvaluationReport:
    r_squared: float
    hedge_cost_total: float
    var_99: Optional[float]
    residual_summary: dict
    betas: np.ndarray
    residuals: np.ndarray = field(repr=False)
    shifted_residuals: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "hedge_cost_total": self.hedge_cost_total,
            "var_99": self.var_99,
            "residual_summary": dict(self.residual_summary),
            "betas": [float(b) for b in self.betas],
        }


def evaluate(panel: ReturnPanel, beta, costs=None) -> EvaluationReport:
    """Score hedge ratios on a panel.

    Residuals are ``y - X beta``. The hedged PnL adds the constant cost drag
    to every residual; the boxplot summary and VaR describe that shifted
    series. VaR is ``None`` when fewer than 100 rows are available.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (panel.n_instruments,):
        raise LengthMismatch(f"expected {panel.n_instruments} hedge ratios, got {beta.size}")
    fitted = panel.x @ beta
    residuals = panel.y - fitted
    cost = hedge_cost(beta, costs)
    shifted = residuals + cost
    var = var_99(residuals, cost) if residuals.size >= MIN_VAR_RESIDUALS else None
    return EvaluationReport(
        r_squared=r_squared(panel.y, fitted),
        hedge_cost_total=cost,
        var_99=var,
        residual_summary=five_number(shifted),
        betas=beta,
        residuals=residuals,
        shifted_residuals=shifted,
    )
