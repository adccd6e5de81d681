import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from hedgekit.exceptions import (
    DataError,
    DegenerateCovariance,
    HeywoodCase,
    IllConditionedGamma,
    SingularScores,
)
from hedgekit.factors import (
    FactorDecomposition,
    extract_hedge,
    fa_fit,
    factor_hedge,
    hedge_residual_parts,
    pca_scores,
    principal_axis,
    regress_on_factors,
    varimax,
    varimax_criterion,
)
from hedgekit.marketdata import ReturnPanel
from hedgekit.regularized import fit_ols

from conftest import random_panel


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeywoodCase)
        return fn(*args, **kw)


# PCA

def test_pca_rank_one_ratio():
    rng = np.random.default_rng(0)
    f = rng.normal(size=500)
    x = np.column_stack([f, 2 * f, -f])
    dec = pca_scores(x, require_invertible=False)
    assert dec.explained_ratio[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateCovariance):
        pca_scores(x)


def test_pca_identity_covariance():
    x = np.random.default_rng(1).normal(size=(20000, 3))
    dec = pca_scores(x)
    np.testing.assert_allclose(dec.explained_variance, 1.0, atol=0.05)


def test_pca_reconstruction_and_trace(rng):
    x = rng.normal(size=(300, 5)) @ rng.normal(size=(5, 5))
    dec = pca_scores(x)
    np.testing.assert_allclose(dec.scores @ dec.gamma, x - x.mean(axis=0), atol=1e-8)
    cov = np.cov(x, rowvar=False)
    assert dec.explained_variance.sum() == pytest.approx(np.trace(cov), rel=1e-10)
    np.testing.assert_allclose(dec.gamma @ dec.gamma.T, np.eye(5), atol=1e-12)
    assert np.all(np.diff(dec.explained_variance) <= 0)


def test_pca_scores_uncorrelated(rng):
    x = rng.normal(size=(300, 4)) @ rng.normal(size=(4, 4))
    cov = np.cov(pca_scores(x).scores, rowvar=False)
    assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 1e-10


def test_pca_sign_deterministic(rng):
    x = rng.normal(size=(100, 3))
    a, b = pca_scores(x), pca_scores(x.copy())
    np.testing.assert_array_equal(a.gamma, b.gamma)


def test_pca_needs_rows():
    with pytest.raises(DataError):
        pca_scores(np.ones((2, 3)))


# Factor analysis

def _generative(rng, k=4000):
    load = np.array([[0.9, 0.0], [0.8, 0.1], [0.1, 0.85], [0.0, 0.7], [0.5, 0.5]])
    f = rng.normal(size=(k, 2))
    uniq = np.sqrt(1.0 - np.sum(load ** 2, axis=1))
    return f @ load.T + rng.normal(size=(k, 5)) * uniq, load


def test_principal_axis_recovers_communalities(rng):
    x, load = _generative(rng)
    corr = np.corrcoef(x, rowvar=False)
    est, h2, info = principal_axis(corr, 2)
    np.testing.assert_allclose(h2, np.sum(load ** 2, axis=1), atol=0.05)
    # loadings identified up to rotation: compare the implied common covariance
    np.testing.assert_allclose(est @ est.T, load @ load.T, atol=0.05)
    assert info["iterations"] < 200


def test_varimax_simple_structure(rng):
    x, load = _generative(rng)
    est, _, _ = principal_axis(np.corrcoef(x, rowvar=False), 2)
    rotated, rot, history = varimax(est)
    np.testing.assert_allclose(rot.T @ rot, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(rotated @ rotated.T, est @ est.T, atol=1e-12)
    # pure items load on a single rotated factor
    assert np.min(np.abs(rotated[:4]), axis=1).max() < 0.2
    assert all(b >= a - 1e-15 for a, b in zip(history, history[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_varimax_monotone_and_orthogonal(seed, m):
    lam = np.random.default_rng(seed).normal(size=(8, m))
    rotated, rot, history = varimax(lam, normalize=False)
    assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))
    np.testing.assert_allclose(rot @ rot.T, np.eye(m), atol=1e-10)
    assert varimax_criterion(rotated) >= varimax_criterion(lam) - 1e-12


def test_fa_rotation_preserves_hedge(synth_panel):
    b_plain, _ = _quiet(factor_hedge, synth_panel, "fa")
    b_rot, dec = _quiet(factor_hedge, synth_panel, "fa-varimax")
    np.testing.assert_allclose(b_rot, b_plain, atol=1e-6)
    hist = dec.meta["varimax_history"]
    assert all(b >= a - 1e-15 for a, b in zip(hist, hist[1:]))


def test_fa_heywood_warns(synth_panel):
    with pytest.warns(HeywoodCase):
        dec = fa_fit(synth_panel)
    assert dec.meta["heywood"]


def test_fa_scores_span(synth_panel):
    dec = _quiet(fa_fit, synth_panel)
    xc = synth_panel.x - synth_panel.x.mean(axis=0)
    np.testing.assert_allclose(dec.scores @ dec.gamma, xc, atol=1e-10)


def test_fa_constant_column(rng):
    x = rng.normal(size=(50, 3))
    x[:, 1] = 0.5
    with pytest.raises(SingularScores):
        fa_fit(x)


# Regression on factors

def test_regress_exact_span(rng):
    x = rng.normal(size=(200, 3))
    dec = pca_scores(x)
    alpha_true = np.array([0.3, -1.0, 2.0])
    y = 5.0 + dec.scores @ alpha_true
    np.testing.assert_allclose(regress_on_factors(dec, y), alpha_true, atol=1e-12)


def test_regress_orthogonal_target(rng):
    x = rng.normal(size=(200, 3))
    dec = pca_scores(x)
    y = rng.normal(size=200)
    y -= dec.scores @ np.linalg.lstsq(dec.scores, y - y.mean(), rcond=None)[0]
    np.testing.assert_allclose(regress_on_factors(dec, y), 0.0, atol=1e-12)


def test_regress_normal_equations(rng):
    x = rng.normal(size=(150, 4))
    dec = pca_scores(x)
    y = rng.normal(size=150)
    f = dec.scores
    oracle = np.linalg.solve(f.T @ f, f.T @ (y - y.mean()))
    np.testing.assert_allclose(regress_on_factors(dec, y), oracle, atol=1e-10)


def test_regress_singular_scores():
    dec = FactorDecomposition(scores=np.ones((10, 2)) * [[1.0, 2.0]], gamma=np.eye(2),
                              explained_variance=np.ones(2), method="pca")
    with pytest.raises(SingularScores):
        regress_on_factors(dec, np.arange(10.0))


# Extraction

def test_extract_identity():
    dec = FactorDecomposition(scores=np.zeros((3, 2)), gamma=np.eye(2),
                              explained_variance=np.ones(2), method="pca")
    np.testing.assert_array_equal(extract_hedge(dec, np.array([0.5, -0.2])), [0.5, -0.2])


def test_extract_ill_conditioned():
    dec = FactorDecomposition(scores=np.zeros((3, 2)), gamma=np.array([[1.0, 1.0], [1.0, 1.0]]),
                              explained_variance=np.ones(2), method="pca")
    with pytest.raises(IllConditionedGamma):
        extract_hedge(dec, np.ones(2))
    with pytest.raises(ValueError):
        extract_hedge(dec)


@pytest.mark.parametrize("method", ["pca", "fa", "fa-varimax"])
def test_factor_hedge_equals_ols(synth_panel, method):
    beta, _ = _quiet(factor_hedge, synth_panel, method)
    ols = fit_ols(synth_panel.centered()).beta
    np.testing.assert_allclose(beta, ols, atol=1e-6)


def test_rotation_invariance(rng):
    panel = random_panel(rng, 200, 4)
    beta, dec = factor_hedge(panel, "pca")
    rot = ortho_group.rvs(4, random_state=3)
    np.testing.assert_allclose(extract_hedge(dec.rotate(rot)), beta, atol=1e-8)


@pytest.mark.parametrize("method", ["pca", "fa"])
def test_hedge_is_factor_neutral(synth_panel, method):
    beta, dec = _quiet(factor_hedge, synth_panel, method)
    hedged = synth_panel.y - synth_panel.x @ beta
    cov = (dec.scores.T @ (hedged - hedged.mean())) / (len(hedged) - 1)
    assert np.max(np.abs(cov)) < 1e-8


def test_residual_parts_identity(rng):
    panel = random_panel(rng, 120, 3)
    _, dec = factor_hedge(panel, "pca")
    delta, eps, beta = hedge_residual_parts(dec, panel)
    yc = panel.y - panel.y.mean()
    xc = panel.x - panel.x.mean(axis=0)
    np.testing.assert_allclose(yc - xc @ beta, delta - eps @ beta, atol=1e-8)


def test_unknown_method(rng):
    with pytest.raises(ValueError):
        factor_hedge(random_panel(rng), "ica")


def test_single_instrument_pca():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(100, 1))
    y = 0.5 * x[:, 0] + 0.01 * rng.normal(size=100)
    beta, _ = factor_hedge(ReturnPanel.from_arrays(x, y), "pca")
    np.testing.assert_allclose(beta, fit_ols(ReturnPanel.from_arrays(x, y).centered()).beta,
                               atol=1e-12)
