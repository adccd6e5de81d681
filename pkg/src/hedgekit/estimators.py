"""scikit-learn compatible hedge estimators.

Each estimator takes instrument returns ``X`` (k x N) and target returns
``y`` (k,), and exposes hedge ratios as ``coef_``. ``predict`` gives the
hedge portfolio's return, so ``y - predict(X)`` is the hedged PnL. They can
be cloned, grid-searched and dropped into pipelines like any regressor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import betavae, factors, regularized
from .marketdata import ReturnPanel
from .sampler import DecayModel, SamplePlan, calibrate_decay, sample_rows


class _HedgeBase(RegressorMixin, BaseEstimator):
    """Shared validation and prediction."""

    def _validate(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        return X, y

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_ + self.intercept_

    def hedged_pnl(self, X, y):
        return np.asarray(y, dtype=float) - self.predict(X)


class _PenalizedHedge(_HedgeBase):
    _penalty = "none"

    def _spec(self):
        costs = None if self.costs is None else tuple(np.ravel(self.costs))
        return regularized.RegularizationSpec(
            penalty=self._penalty, lam=float(self.lam), costs=costs,
            fit_intercept=self.fit_intercept, standardize=self.standardize,
            tol=self.tol, max_iter=self.max_iter,
        )

    def fit(self, X, y):
        X, y = self._validate(X, y)
        spec = self._spec()
        if spec.costs is not None and len(spec.costs) != X.shape[1]:
            raise ValueError(f"got {len(spec.costs)} costs for {X.shape[1]} instruments")
        res = regularized.fit((X, y), spec)
        self.coef_ = res.beta
        self.intercept_ = res.intercept
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self


class OLSHedge(_HedgeBase):
    """Minimum-variance hedge by ordinary least squares.

    Raises :class:`hedgekit.exceptions.SingularDesign` on collinear
    instruments.
    """

    def __init__(self, fit_intercept=False):
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = self._validate(X, y)
        res = regularized.fit_ols(
            (X, y), regularized.RegularizationSpec(fit_intercept=self.fit_intercept))
        self.coef_ = res.beta
        self.intercept_ = res.intercept
        return self


class LassoHedge(_PenalizedHedge):
    """L1-penalized hedge, ``0.5 * RSS + lam * sum(|costs * beta|)``.

    Parameters
    ----------
    lam : float
        Penalty strength on the unnormalized residual sum of squares.
    costs : array-like of shape (N,), optional
        Relative unit cost of each instrument.
    fit_intercept : bool
        Unpenalized intercept; off by default (hedges carry no intercept).
    standardize : bool
        Scale columns to unit variance before penalizing. Not combinable
        with ``costs``.
    """

    _penalty = "l1"

    def __init__(self, lam=1e-4, costs=None, fit_intercept=False, standardize=False,
                 tol=regularized.LASSO_TOL, max_iter=regularized.LASSO_MAX_ITER):
        self.lam = lam
        self.costs = costs
        self.fit_intercept = fit_intercept
        self.standardize = standardize
        self.tol = tol
        self.max_iter = max_iter


class RidgeHedge(_PenalizedHedge):
    """L2-penalized hedge, ``RSS + lam * sum((costs * beta)**2)``."""

    _penalty = "l2"

    def __init__(self, lam=1e-4, costs=None, fit_intercept=False, standardize=False,
                 tol=regularized.LASSO_TOL, max_iter=regularized.LASSO_MAX_ITER):
        self.lam = lam
        self.costs = costs
        self.fit_intercept = fit_intercept
        self.standardize = standardize
        self.tol = tol
        self.max_iter = max_iter


class FactorHedge(TransformerMixin, _HedgeBase):
    """Hedge neutral to PCA or factor-analysis factors.

    ``transform`` maps instrument returns to factor scores.

    Parameters
    ----------
    method : {"pca", "fa", "fa-varimax"}
    """

    def __init__(self, method="pca"):
        self.method = method

    def fit(self, X, y):
        X, y = self._validate(X, y)
        panel = ReturnPanel.from_arrays(X, y)
        beta, decomp = factors.factor_hedge(panel, self.method)
        self.coef_ = beta
        self.intercept_ = 0.0
        self.decomposition_ = decomp
        self.components_ = decomp.gamma
        self.mean_ = decomp.means
        # scores are a linear map of the centered instruments
        self.score_weights_ = np.linalg.lstsq(X - self.mean_, decomp.scores, rcond=None)[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "score_weights_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.score_weights_


class BetaVAEHedge(TransformerMixin, _HedgeBase):
    """Hedge from the linear decoder of a modified beta-VAE.

    ``transform`` returns the latent means for new instrument returns.
    """

    def __init__(self, hidden_layers=(16, 8), beta_hat=0.1, learning_rate=1e-3, epochs=5000,
                 batch_size=64, kl_anneal_epochs=500, restarts=1, random_state=0):
        self.hidden_layers = hidden_layers
        self.beta_hat = beta_hat
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.kl_anneal_epochs = kl_anneal_epochs
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._validate(X, y)
        cfg = betavae.VaeConfig(
            hidden_layers=tuple(self.hidden_layers), beta_hat=self.beta_hat,
            learning_rate=self.learning_rate, epochs=self.epochs,
            batch_size=self.batch_size, seed=int(self.random_state or 0),
            kl_anneal_epochs=self.kl_anneal_epochs,
        )
        model, betas = betavae.train_restarts(ReturnPanel.from_arrays(X, y), cfg, self.restarts)
        self.model_ = model
        self.restart_coefs_ = betas
        self.coef_ = betavae.extract_hedge_vae(model)
        self.intercept_ = 0.0
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        mu, _ = self.model_.encode(check_array(X, dtype=np.float64))
        return mu


class DecayResampler(BaseEstimator):
    """Decay-weighted bootstrap of whole rows.

    ``fit`` calibrates the decay factor (``decay="auto"``) or takes a fixed
    one; ``fit_resample`` returns ``n_samples`` resampled rows of ``(X, y)``.
    Rows must be in time order, oldest first.
    """

    def __init__(self, decay="auto", window=100, grid=None, n_samples=1000, random_state=0):
        self.decay = decay
        self.window = window
        self.grid = grid
        self.n_samples = n_samples
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        if self.decay == "auto":
            self.decay_model_ = calibrate_decay(np.column_stack([y, X]), self.window, self.grid)
        else:
            self.decay_model_ = DecayModel.fixed(float(self.decay))
        self.alpha_decay_ = self.decay_model_.alpha_decay
        return self

    def fit_resample(self, X, y):
        self.fit(X, y)
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        plan = SamplePlan(self.n_samples, int(self.random_state or 0), self.decay_model_)
        rows = sample_rows(X.shape[0], plan)
        self.sample_indices_ = rows
        return X[rows], y[rows]
