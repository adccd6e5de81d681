"""Common-factor hedges.

Instruments and target are both regressed on a set of N factor series
``F`` (``X ~ F @ gamma``, ``y ~ F @ alpha``). Hedging so the combined
position carries no factor exposure means ``gamma @ beta = alpha``.
Factors come from PCA or from iterated principal-axis factor analysis,
optionally Varimax-rotated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import (
    DataError,
    DegenerateCovariance,
    EigenFailure,
    HeywoodCase,
    IllConditionedGamma,
    NoConvergence,
    SingularScores,
)
from .marketdata import ReturnPanel

GAMMA_COND_LIMIT = 1e10
DEGENERATE_EIG_RATIO = 1e-12


@dataclass(frozen=True)
class FactorDecomposition:
    """Factor series and loadings for one construction method.

    Attributes
    ----------
    scores : ndarray, shape (k, N)
        Factor series, centered.
    gamma : ndarray, shape (N, N)
        Instrument loadings, oriented so that centered ``X ~ scores @ gamma``.
    alpha : ndarray of shape (N,) or None
        Target loadings, filled in by :func:`regress_on_factors`.
    explained_variance : ndarray, shape (N,)
        PCA eigenvalues (descending), or sum of squared loadings per factor
        for factor analysis.
    method : str
        ``"pca"``, ``"fa_unrotated"`` or ``"fa_varimax"``.
    """

    scores: np.ndarray
    gamma: np.ndarray
    explained_variance: np.ndarray
    method: str
    alpha: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    loadings: Optional[np.ndarray] = None
    rotation: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.gamma))

    @property
    def explained_ratio(self) -> np.ndarray:
        ev = np.asarray(self.explained_variance, dtype=float)
        return ev / ev.sum()

    def rotate(self, rot: np.ndarray) -> "FactorDecomposition":
        """Re-express the factors through an orthogonal ``rot``.

        ``gamma -> rot @ gamma``, ``alpha -> rot @ alpha`` and
        ``scores -> scores @ rot.T`` leave every fitted value unchanged.
        """
        rot = np.asarray(rot, dtype=float)
        return replace(
            self,
            scores=self.scores @ rot.T,
            gamma=rot @ self.gamma,
            alpha=None if self.alpha is None else rot @ self.alpha,
        )


def _as_matrix(data):
    if isinstance(data, ReturnPanel):
        return data.x
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _fix_signs(vectors):
    # deterministic orientation: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def pca_scores(data, require_invertible: bool = True) -> FactorDecomposition:
    """Principal components of the sample covariance, all N retained.

    Parameters
    ----------
    data : ReturnPanel or array-like of shape (k, N)
        For a panel, only the instrument matrix is decomposed.
    require_invertible : bool
        Raise :class:`DegenerateCovariance` when an eigenvalue falls below
        ``1e-12 * trace``, which would make ``gamma`` unsafe to invert.
        Decay calibration turns this off.
    """
    x = _as_matrix(data)
    k, n = x.shape
    if k <= n:
        raise DataError(f"PCA needs more rows than columns (k={k}, N={n})")
    means = x.mean(axis=0)
    xc = x - means
    cov = np.atleast_2d(np.cov(xc, rowvar=False))
    try:
        eigval, eigvec = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    order = np.argsort(eigval)[::-1]
    eigval = np.clip(eigval[order], 0.0, None)
    eigvec = _fix_signs(eigvec[:, order])
    trace = float(np.trace(cov))
    if require_invertible and (trace <= 0 or eigval[-1] < DEGENERATE_EIG_RATIO * trace):
        raise DegenerateCovariance(
            f"smallest covariance eigenvalue {eigval[-1]:.3g} is below "
            f"{DEGENERATE_EIG_RATIO:g} x trace ({trace:.3g})"
        )
    return FactorDecomposition(
        scores=xc @ eigvec,
        gamma=eigvec.T.copy(),
        explained_variance=eigval,
        method="pca",
        means=means,
        loadings=eigvec,
        meta={"trace": trace},
    )


# -- factor analysis --------------------------------------------------------

def varimax_criterion(loadings: np.ndarray) -> float:
    """Raw varimax criterion: summed column variances of squared loadings."""
    sq = loadings ** 2
    p = loadings.shape[0]
    return float(np.sum(p * np.sum(sq ** 2, axis=0) - np.sum(sq, axis=0) ** 2) / p ** 2)


def varimax(loadings, normalize: bool = True, tol: float = 1e-8, max_sweeps: int = 1000):
    """Orthogonal Varimax rotation by sweeps of pairwise planar rotations.

    Each planar rotation maximizes the criterion for its pair exactly, so
    the criterion never decreases from one sweep to the next. With
    ``normalize`` (Kaiser), rows are scaled to unit communality first.

    Returns
    -------
    rotated : ndarray
        ``loadings @ rotation``.
    rotation : ndarray
        Orthogonal matrix.
    history : list of float
        Criterion value (on the normalized loadings) after each sweep,
        starting with the unrotated value.
    """
    lam = np.array(loadings, dtype=float)
    p, m = lam.shape
    if normalize:
        h = np.sqrt(np.sum(lam ** 2, axis=1))
        h[h == 0] = 1.0
        lam = lam / h[:, None]
    rot = np.eye(m)
    history = [varimax_criterion(lam)]
    for _ in range(max_sweeps):
        for a in range(m - 1):
            for b in range(a + 1, m):
                xa, xb = lam[:, a], lam[:, b]
                u = xa ** 2 - xb ** 2
                v = 2.0 * xa * xb
                A, B = u.sum(), v.sum()
                C = np.sum(u ** 2 - v ** 2)
                D = 2.0 * np.sum(u * v)
                num = D - 2.0 * A * B / p
                den = C - (A ** 2 - B ** 2) / p
                phi = 0.25 * np.arctan2(num, den)
                if phi == 0.0:
                    continue
                c, s = np.cos(phi), np.sin(phi)
                plane = np.array([[c, -s], [s, c]])
                lam[:, [a, b]] = lam[:, [a, b]] @ plane
                rot[:, [a, b]] = rot[:, [a, b]] @ plane
        history.append(varimax_criterion(lam))
        if abs(history[-1] - history[-2]) <= tol * max(1.0, abs(history[-1])):
            break
    rotated = np.asarray(loadings, dtype=float) @ rot
    return rotated, rot, history


def _smc(corr):
    try:
        inv = np.linalg.inv(corr)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(corr)
    smc = 1.0 - 1.0 / np.diag(inv)
    # fallback for non-finite values on singular input
    fallback = np.max(np.abs(corr - np.eye(len(corr))), axis=1)
    return np.where(np.isfinite(smc) & (smc > 0), smc, fallback)


def principal_axis(corr, n_factors, tol=1e-6, max_iter=200, eig_floor=1e-6):
    """Iterated principal-axis factoring of a correlation matrix.

    Communalities start at the squared multiple correlations. Reduced-matrix
    eigenvalues are floored at ``eig_floor * mean eigenvalue`` so that all N
    factors keep non-zero loadings. Communalities above one are clamped to
    0.999 and reported.

    Returns ``(loadings, communalities, info)``.
    """
    n = corr.shape[0]
    h2 = _smc(corr)
    floor = eig_floor * np.trace(corr) / n
    heywood = set()
    for it in range(1, max_iter + 1):
        reduced = corr.copy()
        np.fill_diagonal(reduced, h2)
        try:
            eigval, eigvec = np.linalg.eigh(reduced)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(str(exc)) from exc
        order = np.argsort(eigval)[::-1][:n_factors]
        eigval = np.maximum(eigval[order], floor)
        eigvec = _fix_signs(eigvec[:, order])
        loadings = eigvec * np.sqrt(eigval)
        new_h2 = np.sum(loadings ** 2, axis=1)
        over = new_h2 > 1.0
        if np.any(over):
            heywood.update(np.flatnonzero(over).tolist())
            new_h2 = np.where(over, 0.999, new_h2)
        delta = np.max(np.abs(new_h2 - h2))
        h2 = new_h2
        if delta < tol:
            break
    else:
        raise NoConvergence(
            f"principal-axis communalities did not converge in {max_iter} iterations "
            f"(last change {delta:.3g})"
        )
    return loadings, h2, {"iterations": it, "heywood": sorted(heywood)}


def fa_fit(panel, rotate: bool = False, tol: float = 1e-6,
           max_iter: int = 200) -> FactorDecomposition:
    """Factor analysis with as many factors as instruments.

    Loadings come from iterated principal-axis factoring of the instrument
    correlation matrix, optionally Varimax-rotated; factor series are
    regression (Thomson) scores. ``gamma`` is the least-squares regression
    of the centered instruments on those scores, so the hedged series is
    neutral to every factor. The pattern loadings are kept in ``loadings``.
    """
    x = _as_matrix(panel)
    k, n = x.shape
    if k <= n:
        raise DataError(f"factor analysis needs more rows than columns (k={k}, N={n})")
    means = x.mean(axis=0)
    xc = x - means
    std = xc.std(axis=0, ddof=1)
    if np.any(std == 0):
        raise SingularScores("constant instrument column")
    z = xc / std
    corr = np.atleast_2d(np.corrcoef(x, rowvar=False))

    loadings, h2, info = principal_axis(corr, n, tol=tol, max_iter=max_iter)
    if info["heywood"]:
        warnings.warn(
            f"Heywood case: communalities of columns {info['heywood']} exceeded 1 "
            "and were clamped to 0.999", HeywoodCase, stacklevel=3,
        )
    rotation = np.eye(n)
    history = None
    if rotate:
        loadings, rotation, history = varimax(loadings, normalize=True)

    try:
        weights = np.linalg.solve(corr, loadings)
    except np.linalg.LinAlgError as exc:
        raise SingularScores(f"instrument correlation matrix is singular: {exc}") from exc
    scores = z @ weights
    scores = scores - scores.mean(axis=0)

    gamma, _, rank, _ = np.linalg.lstsq(scores, xc, rcond=None)
    if rank < n:
        raise SingularScores(f"factor scores have rank {rank} < {n}")

    meta = {
        "iterations": info["iterations"],
        "heywood": info["heywood"],
        "communalities": h2.tolist(),
    }
    if history is not None:
        meta["varimax_history"] = history
    return FactorDecomposition(
        scores=scores,
        gamma=gamma,
        explained_variance=np.sum(loadings ** 2, axis=0),
        method="fa_varimax" if rotate else "fa_unrotated",
        means=means,
        loadings=loadings,
        rotation=rotation,
        meta=meta,
    )


# -- hedge extraction --------------------------------------------------------

def regress_on_factors(decomp: FactorDecomposition, y) -> np.ndarray:
    """Least-squares target loadings on the factor scores (no intercept).

    ``y`` is demeaned first; scores are already centered.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != decomp.scores.shape[0]:
        raise DataError("y length differs from the number of score rows")
    yc = y - y.mean()
    alpha, _, rank, sv = np.linalg.lstsq(decomp.scores, yc, rcond=None)
    n = decomp.scores.shape[1]
    if rank < n or sv[-1] <= sv[0] * 1e-13:
        raise SingularScores(f"factor scores have rank {rank} < {n}")
    return alpha


def extract_hedge(decomp: FactorDecomposition, alpha=None) -> np.ndarray:
    """Hedge ratios solving ``gamma @ beta = alpha``."""
    if alpha is None:
        alpha = decomp.alpha
    if alpha is None:
        raise ValueError("target loadings missing; call regress_on_factors first")
    gamma = np.asarray(decomp.gamma, dtype=float)
    cond = float(np.linalg.cond(gamma))
    if not np.isfinite(cond) or cond >= GAMMA_COND_LIMIT:
        raise IllConditionedGamma(cond)
    return np.linalg.solve(gamma, np.asarray(alpha, dtype=float))


def hedge_residual_parts(decomp: FactorDecomposition, panel: ReturnPanel, alpha=None):
    """Split the centered hedged series into target and instrument noise.

    Returns ``(delta, epsilon, beta)`` with ``y_c - X_c @ beta = delta - epsilon @ beta``,
    where ``delta`` is the target's residual on the factors and
    ``epsilon`` the instruments' residual.
    """
    alpha = decomp.alpha if alpha is None else alpha
    beta = extract_hedge(decomp, alpha)
    yc = panel.y - panel.y.mean()
    xc = panel.x - panel.x.mean(axis=0)
    delta = yc - decomp.scores @ alpha
    epsilon = xc - decomp.scores @ decomp.gamma
    return delta, epsilon, beta


def factor_hedge(panel: ReturnPanel, method: str = "pca", **kwargs):
    """Build factors, regress the target on them and extract hedge ratios.

    Returns ``(beta, decomposition)`` with ``alpha`` filled in.
    """
    if method == "pca":
        decomp = pca_scores(panel)
    elif method in ("fa", "fa_unrotated"):
        decomp = fa_fit(panel, rotate=False, **kwargs)
    elif method in ("fa_varimax", "fa-varimax"):
        decomp = fa_fit(panel, rotate=True, **kwargs)
    else:
        raise ValueError(f"unknown factor method {method!r}")
    alpha = regress_on_factors(decomp, panel.y)
    decomp = replace(decomp, alpha=alpha)
    return extract_hedge(decomp, alpha), decomp
