"""Decay-weighted historical sampling.

Whole dated rows are resampled with probabilities that decay geometrically
with age, keeping each day's target and instrument moves together. The
decay factor is calibrated so that probability-integral-transform (PIT)
values of each new observation, taken against the decay-weighted empirical
distribution of the preceding window, look uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .exceptions import DataError, InvalidAlpha, SeriesTooShort, ZeroLength
from .factors import pca_scores
from .marketdata import ReturnPanel

DEFAULT_GRID = tuple(np.round(np.linspace(0.97, 1.0, 61), 10).tolist())


def _check_alpha(alpha):
    if not (0.0 < alpha <= 1.0) or not np.isfinite(alpha):
        raise InvalidAlpha(f"decay factor must lie in (0, 1], got {alpha!r}")


def decay_weights(t: int, alpha: float) -> np.ndarray:
    """Sampling probabilities for ``t`` ordered observations, oldest first.

    ``weight[i]`` is proportional to ``alpha ** (t - 1 - i)``, so the most
    recent observation carries the largest weight. Normalized to sum to one.
    """
    if int(t) != t or t < 1:
        raise ZeroLength(f"need at least one observation, got t={t!r}")
    _check_alpha(alpha)
    if alpha == 1.0:
        return np.full(int(t), 1.0 / t)
    w = np.power(float(alpha), np.arange(int(t) - 1, -1, -1, dtype=float))
    return w / w.sum()


def _pit_indicators(series, window):
    series = np.asarray(series, dtype=float)
    if window < 2 or series.ndim != 1 or len(series) <= window:
        raise SeriesTooShort(
            f"PIT needs len(series) > window >= 2 (len={series.size}, window={window})"
        )
    past = sliding_window_view(series, window)[:-1]
    current = series[window:, None]
    return (past < current).astype(float), (past == current).astype(float)


def pit_values(series, alpha: float, window: int) -> np.ndarray:
    """Decay-weighted rolling PIT values of ``series[window:]``.

    Each observation is scored against the ``window`` observations before it,
    weighted by :func:`decay_weights`; ties count half their weight.
    """
    less, equal = _pit_indicators(series, window)
    w = decay_weights(window, alpha)
    return np.clip(less @ w + 0.5 * (equal @ w), 0.0, 1.0)


def ks_uniform(values):
    """Kolmogorov-Smirnov statistic and p-value against U(0, 1)."""
    res = stats.kstest(np.asarray(values, dtype=float), "uniform")
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class DecayModel:
    alpha_decay: float = 1.0
    window: int = 0
    component_alphas: tuple = ()
    component_weights: tuple = ()
    pit_stat: float = float("nan")
    pit_pvalue: float = float("nan")
    grid: tuple = field(default=(), repr=False)

    def __post_init__(self):
        _check_alpha(self.alpha_decay)

    @classmethod
    def fixed(cls, alpha: float) -> "DecayModel":
        return cls(alpha_decay=float(alpha))

    def to_dict(self) -> dict:
        return {
            "alpha_decay": self.alpha_decay,
            "window": self.window,
            "component_alphas": list(self.component_alphas),
            "component_weights": list(self.component_weights),
            "pit_stat": self.pit_stat,
            "pit_pvalue": self.pit_pvalue,
        }


@dataclass(frozen=True)
class SamplePlan:
    n_samples: int
    seed: int = 0
    decay: Optional[DecayModel] = None

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def alpha(self) -> float:
        return 1.0 if self.decay is None else self.decay.alpha_decay


def _best_alpha(series, window, grid):
    less, equal = _pit_indicators(series, window)
    best, best_stat = None, np.inf
    # ascending scan with <= so ties resolve to the larger alpha (less decay)
    for alpha in sorted(grid):
        w = decay_weights(window, alpha)
        stat, _ = ks_uniform(np.clip(less @ w + 0.5 * (equal @ w), 0.0, 1.0))
        if stat <= best_stat:
            best, best_stat = alpha, stat
    return float(best), float(best_stat)


def calibrate_decay(panel, window: int, grid: Optional[Sequence[float]] = None) -> DecayModel:
    """Fit the sampling decay factor on the principal components of ``[y | x]``.

    Each component's score series gets the grid value minimizing the KS
    distance of its PIT values from uniform; the panel-level factor is the
    explained-variance-weighted average. Reported KS diagnostics pool the
    PIT values of all components at that averaged factor.
    """
    grid = tuple(DEFAULT_GRID if grid is None else grid)
    if not grid:
        raise InvalidAlpha("empty decay grid")
    for a in grid:
        _check_alpha(a)
    if isinstance(panel, ReturnPanel):
        data = panel.joint()
    else:
        data = np.asarray(panel, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
    if data.shape[0] <= window:
        raise SeriesTooShort(f"panel has {data.shape[0]} rows, window is {window}")

    decomp = pca_scores(data, require_invertible=False)
    total = float(np.sum(decomp.explained_variance))
    if total <= 0:
        raise DataError("panel has zero variance")
    weights = np.asarray(decomp.explained_variance) / total
    weights = weights / weights.sum()

    alphas = [_best_alpha(decomp.scores[:, i], window, grid)[0]
              for i in range(decomp.scores.shape[1])]
    combined = float(np.clip(np.dot(weights, alphas), min(grid), 1.0))

    pooled = np.concatenate([pit_values(decomp.scores[:, i], combined, window)
                             for i in range(decomp.scores.shape[1])])
    stat, pvalue = ks_uniform(pooled)
    return DecayModel(
        alpha_decay=combined,
        window=int(window),
        component_alphas=tuple(alphas),
        component_weights=tuple(weights.tolist()),
        pit_stat=stat,
        pit_pvalue=pvalue,
        grid=grid,
    )


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; streams are reproducible across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_rows(n_rows: int, plan: SamplePlan) -> np.ndarray:
    weights = decay_weights(n_rows, plan.alpha)
    return make_rng(plan.seed).choice(n_rows, size=int(plan.n_samples), replace=True, p=weights)


def draw_sample(panel: ReturnPanel, plan: SamplePlan) -> ReturnPanel:
    """Bootstrap ``plan.n_samples`` whole rows with decay-weighted probabilities."""
    if panel.n_obs < 1:
        raise DataError("cannot sample from an empty panel")
    rows = sample_rows(panel.n_obs, plan)
    out = panel.take(rows)
    out.meta["sample_rows"] = rows
    return out
