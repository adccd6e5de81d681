"""Hedge ratios and risk compression by regularized regression and common factors."""

__version__ = "0.1.0"

from .marketdata import PricePanel, ReturnPanel, load_price_csv, to_returns  # noqa: E402
from .estimators import (  # noqa: E402
    BetaVAEHedge,
    DecayResampler,
    FactorHedge,
    LassoHedge,
    OLSHedge,
    RidgeHedge,
)

__all__ = [
    "PricePanel",
    "ReturnPanel",
    "load_price_csv",
    "to_returns",
    "OLSHedge",
    "LassoHedge",
    "RidgeHedge",
    "FactorHedge",
    "BetaVAEHedge",
    "DecayResampler",
]
