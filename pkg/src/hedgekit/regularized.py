"""Penalized least-squares hedge ratios: OLS, Lasso, Ridge, and cost-weighted variants.

Objectives (no intercept unless requested; an intercept is never penalized):

* OLS    ``sum(r**2)``
* Ridge  ``sum(r**2) + lam * sum(beta**2)``   i.e. ``(X'X + lam I) beta = X'y``
* Lasso  ``0.5 * sum(r**2) + lam * sum(|beta|)``

Per-instrument unit costs ``psi`` enter the penalty as ``|psi_j beta_j|``.
They are handled by rescaling columns ``x_j / psi_j``, fitting the plain
penalty, and mapping the coefficients back with ``beta_j = beta_hat_j / psi_j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .exceptions import ConfigError, NonPositiveCost, NotConverged, SingularDesign
from .marketdata import ReturnPanel

PENALTIES = ("none", "l1", "l2")
LASSO_TOL = 1e-9
LASSO_MAX_ITER = 100_000


@dataclass(frozen=True)
class RegularizationSpec:
    penalty: str = "none"
    lam: float = 0.0
    costs: Optional[tuple] = None
    fit_intercept: bool = False
    standardize: bool = False
    tol: float = LASSO_TOL
    max_iter: int = LASSO_MAX_ITER

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ConfigError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise ConfigError(f"lambda must be a finite non-negative real, got {self.lam!r}")
        if self.costs is not None:
            costs = tuple(float(c) for c in np.ravel(self.costs))
            if not all(np.isfinite(c) and c > 0 for c in costs):
                raise NonPositiveCost(f"unit costs must all be positive, got {costs}")
            object.__setattr__(self, "costs", costs)
            if self.standardize:
                raise ConfigError("standardize and costs are mutually exclusive")


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    intercept: float
    residuals: np.ndarray
    iterations: int = 0
    converged: bool = True
    objective_history: tuple = field(default=(), repr=False)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _center(x, y, fit_intercept):
    if not fit_intercept:
        return x, y, np.zeros(x.shape[1]), 0.0
    xm, ym = x.mean(axis=0), float(y.mean())
    return x - xm, y - ym, xm, ym


def _finish(x, y, beta, xm, ym, fit_intercept, **kw):
    intercept = ym - float(xm @ beta) if fit_intercept else 0.0
    return FitResult(beta=beta, intercept=intercept, residuals=y - intercept - x @ beta, **kw)


def _dependent_columns(r, perm, rank):
    """Columns taking part in the first detected linear dependency."""
    tail = perm[rank:]
    coef = scipy.linalg.solve_triangular(r[:rank, :rank], r[:rank, rank], check_finite=False)
    head = perm[:rank][np.abs(coef) > 1e-8]
    return sorted({int(c) for c in np.concatenate([head, tail])})


def _ols(x, y, names=None):
    k, n = x.shape
    if k <= n:
        raise SingularDesign(f"need more observations than instruments (k={k}, N={n})")
    q, r, perm = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(k, n) * np.finfo(float).eps * diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < n:
        cols = _dependent_columns(r, perm, rank)
        labels = [names[c] for c in cols] if names is not None else cols
        raise SingularDesign(
            f"instrument matrix is rank deficient (rank {rank} < {n}); "
            f"collinear columns: {labels}", columns=labels,
        )
    z = scipy.linalg.solve_triangular(r, q.T @ y, check_finite=False)
    beta = np.empty(n)
    beta[perm] = z
    return beta


def _ridge(x, y, lam, names=None):
    if lam == 0:
        return _ols(x, y, names)
    gram = x.T @ x + lam * np.eye(x.shape[1])
    return scipy.linalg.solve(gram, x.T @ y, assume_a="pos")


def lasso_objective(x, y, beta, lam):
    r = y - x @ beta
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(beta)))


def _lasso_cd(x, y, lam, tol=LASSO_TOL, max_iter=LASSO_MAX_ITER, beta0=None):
    """Cyclic coordinate descent on the Gram matrix.

    Columns are visited in index order, so when two columns are exact copies
    the lower index takes the weight first.
    """
    n = x.shape[1]
    gram = x.T @ x
    xty = x.T @ y
    yty = float(y @ y)
    diag = np.diag(gram).copy()
    beta = np.zeros(n) if beta0 is None else np.array(beta0, dtype=float)
    # grad_part[j] = (G beta)_j, kept in sync with beta
    g_beta = gram @ beta

    def objective():
        return 0.5 * (yty - 2.0 * float(beta @ xty) + float(beta @ g_beta)) + lam * float(
            np.sum(np.abs(beta)))

    history = [objective()]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        max_step = 0.0
        for j in range(n):
            if diag[j] == 0.0:
                continue
            old = beta[j]
            rho = xty[j] - g_beta[j] + diag[j] * old
            new = soft_threshold(rho, lam) / diag[j]
            step = new - old
            if step != 0.0:
                beta[j] = new
                g_beta += gram[:, j] * step
                max_step = max(max_step, abs(step))
        history.append(objective())
        if max_step < tol:
            converged = True
            break
    return beta, it, converged, history


def _arrays(panel):
    if isinstance(panel, ReturnPanel):
        return panel.x, panel.y, panel.instrument_names
    x, y = panel
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x, np.asarray(y, dtype=float), None


def fit_ols(panel, spec: Optional[RegularizationSpec] = None) -> FitResult:
    """Least squares via column-pivoted QR.

    Raises :class:`SingularDesign` naming the collinear columns when the
    instrument matrix is rank deficient.
    """
    spec = spec or RegularizationSpec()
    x, y, names = _arrays(panel)
    xs, ys, xm, ym = _center(x, y, spec.fit_intercept)
    return _finish(x, y, _ols(xs, ys, names), xm, ym, spec.fit_intercept)


def fit_ridge(panel, spec: RegularizationSpec) -> FitResult:
    """Closed-form ridge solution of ``(X'X + lam I) beta = X'y``."""
    x, y, names = _arrays(panel)
    xs, ys, xm, ym = _center(x, y, spec.fit_intercept)
    return _finish(x, y, _ridge(xs, ys, spec.lam, names), xm, ym, spec.fit_intercept)


def fit_lasso(panel, spec: RegularizationSpec, beta0=None) -> FitResult:
    """Lasso by cyclic coordinate descent with soft-thresholding.

    Stops when the largest coordinate change in a full cycle drops below
    ``spec.tol``. Hitting ``spec.max_iter`` emits :class:`NotConverged` and
    returns the last iterate with ``converged=False``.
    """
    x, y, _ = _arrays(panel)
    xs, ys, xm, ym = _center(x, y, spec.fit_intercept)
    beta, it, converged, history = _lasso_cd(xs, ys, spec.lam, spec.tol, spec.max_iter, beta0)
    if not converged:
        warnings.warn(f"lasso coordinate descent hit max_iter={spec.max_iter}",
                      NotConverged, stacklevel=2)
    return _finish(x, y, beta, xm, ym, spec.fit_intercept, iterations=it,
                   converged=converged, objective_history=tuple(history))


def _fit_plain(x, y, spec, names=None):
    """Dispatch on penalty for already-scaled arrays; returns a FitResult."""
    if spec.penalty == "l1":
        return fit_lasso((x, y), spec)
    if spec.penalty == "l2":
        return fit_ridge((x, y), spec)
    xs, ys, xm, ym = _center(x, y, spec.fit_intercept)
    return _finish(x, y, _ols(xs, ys, names), xm, ym, spec.fit_intercept)


def _fit_scaled(panel, spec, scale):
    x, y, names = _arrays(panel)
    scale = np.asarray(scale, dtype=float)
    if scale.shape != (x.shape[1],):
        raise ConfigError(f"expected {x.shape[1]} unit costs, got {scale.size}")
    inner = _fit_plain(x / scale, y, spec, names)
    beta = inner.beta / scale
    intercept = inner.intercept
    return FitResult(beta=beta, intercept=intercept, residuals=y - intercept - x @ beta,
                     iterations=inner.iterations, converged=inner.converged,
                     objective_history=inner.objective_history)


def fit_with_costs(panel, spec: RegularizationSpec) -> FitResult:
    """Penalized fit with per-instrument unit costs ``spec.costs``."""
    if spec.costs is None:
        raise NonPositiveCost("fit_with_costs needs unit costs")
    return _fit_scaled(panel, spec, spec.costs)


def column_scale(x):
    sd = np.asarray(x, dtype=float).std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return sd


def fit(panel, spec: RegularizationSpec) -> FitResult:
    """Route a spec to the matching solver."""
    if spec.costs is not None:
        return fit_with_costs(panel, spec)
    if spec.standardize:
        x, _, _ = _arrays(panel)
        return _fit_scaled(panel, spec, column_scale(x))
    x, y, names = _arrays(panel)
    return _fit_plain(x, y, spec, names)


def lambda_max(panel) -> float:
    """Smallest L1 penalty at which every Lasso coefficient is zero."""
    x, y, _ = _arrays(panel)
    return float(np.max(np.abs(x.T @ y)))


def cross_validate_lambda(panel, spec: RegularizationSpec, lambdas: Sequence[float],
                          n_folds: int = 5, decay: float = 1.0):
    """Pick ``lam`` from a ladder by contiguous-block cross-validation.

    The score is the decay-weighted mean squared out-of-sample residual, the
    weights being :func:`hedgekit.sampler.decay_weights` over row position.
    Returns ``(best_lambda, {lam: score})``; ties go to the larger penalty.
    """
    from .sampler import decay_weights

    x, y, _ = _arrays(panel)
    k = x.shape[0]
    if not 2 <= n_folds <= k:
        raise ConfigError(f"n_folds must lie in [2, {k}], got {n_folds}")
    if not lambdas:
        raise ConfigError("empty lambda ladder")
    weights = decay_weights(k, decay)
    folds = np.array_split(np.arange(k), n_folds)
    scores = {}
    for lam in lambdas:
        trial = RegularizationSpec(spec.penalty, float(lam), spec.costs, spec.fit_intercept,
                                   spec.standardize, spec.tol, spec.max_iter)
        sq = np.empty(k)
        for hold in folds:
            train = np.setdiff1d(np.arange(k), hold)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotConverged)
                res = fit((x[train], y[train]), trial)
            sq[hold] = (y[hold] - res.intercept - x[hold] @ res.beta) ** 2
        scores[float(lam)] = float(weights @ sq)
    best = min(sorted(scores, reverse=True), key=lambda lam: scores[lam])
    return best, scores


def parse_cv_ladder(text: str):
    """``"K:l1,l2,..."`` or ``"l1,l2,..."`` (K defaults to 5)."""
    folds = 5
    if ":" in text:
        head, text = text.split(":", 1)
        try:
            folds = int(head)
        except ValueError:
            raise ConfigError(f"bad fold count in --cv {head!r}") from None
    try:
        ladder = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad lambda ladder in --cv {text!r}") from None
    if not ladder or any(v < 0 for v in ladder):
        raise ConfigError("--cv ladder must list non-negative lambdas")
    return folds, ladder
