"""Synthetic ten-instrument price panel for offline runs and tests.

Instruments load on a market factor plus one of three sector factors; one
pair (``GOOG``/``GOOGL``) differs only by a small tracking noise, so the
design is nearly collinear. The target is a noisy linear combination of the
instruments.
"""

from __future__ import annotations

import numpy as np

from .marketdata import PricePanel, ReturnPanel, to_returns

TARGET = "SPY"
INSTRUMENTS = ("AAPL", "AMZN", "BRK-B", "GOOG", "GOOGL", "JNJ", "JPM", "MSFT", "UNH", "XOM")

# market beta, sector id, sector loading
_LOADINGS = {
    "AAPL": (1.15, 0, 0.9),
    "AMZN": (1.20, 0, 1.0),
    "BRK-B": (0.90, 1, 0.7),
    "GOOG": (1.10, 0, 0.9),
    "JNJ": (0.65, 2, 0.8),
    "JPM": (1.10, 1, 1.0),
    "MSFT": (1.10, 0, 0.8),
    "UNH": (0.80, 2, 0.9),
    "XOM": (0.95, 1, 0.6),
}
_TARGET_WEIGHTS = np.array([0.14, 0.09, 0.24, 0.03, 0.04, 0.09, 0.15, 0.13, 0.02, 0.06])

DEFAULT_SEED = 20140327


def generate_returns(n_obs: int = 1000, seed: int = DEFAULT_SEED,
                     market_vol: float = 0.010, sector_vol: float = 0.006,
                     idio_vol: float = 0.009, pair_noise: float = 0.0012,
                     target_noise: float = 0.0017):
    """Draw log returns ``(y, x)`` with ``x`` ordered as :data:`INSTRUMENTS`."""
    rng = np.random.default_rng(seed)
    market = rng.normal(0.0, market_vol, n_obs)
    sectors = rng.normal(0.0, sector_vol, (n_obs, 3))
    x = np.empty((n_obs, len(INSTRUMENTS)))
    for j, name in enumerate(INSTRUMENTS):
        if name == "GOOGL":
            continue
        b, sec, s = _LOADINGS[name]
        x[:, j] = 0.0002 + b * market + s * sectors[:, sec] + rng.normal(0.0, idio_vol, n_obs)
    goog = INSTRUMENTS.index("GOOG")
    x[:, goog + 1] = x[:, goog] + rng.normal(0.0, pair_noise, n_obs)
    y = x @ _TARGET_WEIGHTS + rng.normal(0.0, target_noise, n_obs)
    return y, x


def business_days(n: int, start: str = "2015-01-02"):
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return tuple(str(d) for d in days)


def generate_prices(n_obs: int = 1000, seed: int = DEFAULT_SEED, **kwargs) -> PricePanel:
    """Prices whose log returns are :func:`generate_returns` (``n_obs + 1`` rows)."""
    y, x = generate_returns(n_obs, seed, **kwargs)
    rng = np.random.default_rng(seed + 1)
    start = rng.uniform(50.0, 400.0, len(INSTRUMENTS) + 1)
    logret = np.column_stack([y, x])
    logp = np.vstack([np.log(start), np.log(start) + np.cumsum(logret, axis=0)])
    return PricePanel(business_days(n_obs + 1), (TARGET, *INSTRUMENTS), np.exp(logp))


def generate_costs(seed: int = DEFAULT_SEED) -> dict:
    """Per-instrument unit costs in the 1e-4 range, rounded to 6 decimals."""
    rng = np.random.default_rng(seed + 2)
    values = np.round(rng.uniform(0.00008, 0.0009, len(INSTRUMENTS)), 6)
    return dict(zip(INSTRUMENTS, values.tolist()))


def synthetic_panel(n_obs: int = 1000, seed: int = DEFAULT_SEED, **kwargs) -> ReturnPanel:
    """Returns of :func:`generate_prices`; keyword arguments go to :func:`generate_returns`."""
    return to_returns(generate_prices(n_obs, seed, **kwargs), TARGET)
