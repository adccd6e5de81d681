import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hedgekit.exceptions import InvalidAlpha, SeriesTooShort, ZeroLength
from hedgekit.marketdata import ReturnPanel
from hedgekit.sampler import (
    DEFAULT_GRID,
    SamplePlan,
    calibrate_decay,
    decay_weights,
    draw_sample,
    pit_values,
)


def test_uniform_limit():
    np.testing.assert_array_equal(decay_weights(4, 1.0), [0.25] * 4)


def test_half_decay_three_points():
    # geometric 0.25, 0.5, 1 normalized by 1.75
    np.testing.assert_allclose(decay_weights(3, 0.5), [1 / 7, 2 / 7, 4 / 7], rtol=0, atol=1e-16)


@pytest.mark.parametrize("alpha", [0.01, 0.5, 1.0])
def test_single_point(alpha):
    np.testing.assert_array_equal(decay_weights(1, alpha), [1.0])


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.01, float("nan")])
def test_invalid_alpha(alpha):
    with pytest.raises(InvalidAlpha):
        decay_weights(3, alpha)


def test_zero_length():
    with pytest.raises(ZeroLength):
        decay_weights(0, 0.9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.floats(0.05, 1.0))
def test_weights_sum_and_order(t, alpha):
    w = decay_weights(t, alpha)
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(np.diff(w) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 300), st.floats(0.05, 0.99), st.floats(0.001, 0.5))
def test_smaller_alpha_favours_latest(t, alpha, gap):
    lower = max(alpha - gap, 0.01)
    assert decay_weights(t, lower)[-1] > decay_weights(t, alpha)[-1]


def test_pit_increasing_series_is_one():
    assert np.all(pit_values(np.arange(50.0), 0.9, 10) == 1.0)


def test_pit_constant_series_is_half():
    np.testing.assert_allclose(pit_values(np.ones(40), 0.95, 10), 0.5, rtol=0, atol=1e-12)


def test_pit_midpoint_ties():
    # current value 2 against window [1, 2, 3] with equal weights: 1/3 + 0.5 * 1/3
    assert pit_values(np.array([1.0, 2.0, 3.0, 2.0]), 1.0, 3)[0] == pytest.approx(0.5)


def test_pit_too_short():
    with pytest.raises(SeriesTooShort):
        pit_values(np.arange(5.0), 1.0, 5)
    with pytest.raises(SeriesTooShort):
        pit_values(np.arange(5.0), 1.0, 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=60), st.floats(0.1, 1.0))
def test_pit_in_unit_interval(values, alpha):
    pit = pit_values(np.array(values), alpha, 3)
    assert np.all((pit >= 0) & (pit <= 1))


def test_pit_iid_normal_ks_monte_carlo():
    # 100 seeded draws of 5000 iid normals: PIT at alpha=1 should pass KS at 5%
    n_pit = 5000 - 250
    critical = stats.kstwo.ppf(0.95, n_pit)
    passed = 0
    for seed in range(100):
        x = np.random.default_rng(seed).standard_normal(5000)
        stat = stats.kstest(pit_values(x, 1.0, 250), "uniform").statistic
        passed += stat < critical
    assert passed >= 90


def _panel(seed, shift, n=2000, cols=4):
    z = np.random.default_rng(seed).normal(0.0, 0.01, (n, cols))
    if shift:
        z[n // 2:] *= 2.0
    return ReturnPanel.from_arrays(z[:, 1:], z[:, 0])


def test_calibration_regime_shift_lowers_alpha():
    iid = calibrate_decay(_panel(3, False), 250)
    shifted = calibrate_decay(_panel(3, True), 250)
    assert shifted.alpha_decay < iid.alpha_decay


def test_calibration_model_fields():
    model = calibrate_decay(_panel(0, False), 250)
    assert len(model.component_alphas) == 4
    assert abs(sum(model.component_weights) - 1.0) < 1e-12
    assert model.alpha_decay == pytest.approx(
        np.dot(model.component_weights, model.component_alphas), abs=1e-15)
    assert 0 <= model.pit_pvalue <= 1
    assert set(model.component_alphas) <= set(DEFAULT_GRID)


@pytest.mark.xfail(strict=True, reason=(
    "KS over a rolling-window PIT cannot separate alpha in [0.997, 1] from slightly "
    "lower values on iid data: alpha=1 PITs are discrete-uniform on window+1 points, "
    "which costs ~1/window of KS distance; calibrations land around 0.99-0.997"))
def test_calibration_iid_top_decile():
    lo, hi = min(DEFAULT_GRID), max(DEFAULT_GRID)
    threshold = hi - 0.1 * (hi - lo)
    model = calibrate_decay(_panel(0, False, n=5000, cols=2), 250)
    assert model.alpha_decay >= threshold


def test_draw_single_row():
    panel = ReturnPanel.from_arrays([[0.1, 0.2]], [0.3])
    out = draw_sample(panel, SamplePlan(5, seed=1))
    assert out.n_obs == 5
    assert np.all(out.x == [0.1, 0.2]) and np.all(out.y == 0.3)


def test_draw_deterministic(synth_panel):
    plan = SamplePlan(300, seed=99)
    a, b = draw_sample(synth_panel, plan), draw_sample(synth_panel, plan)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.dates == b.dates


def test_draw_frequencies_match_weights():
    from hedgekit.sampler import DecayModel
    panel = ReturnPanel.from_arrays(np.arange(3.0)[:, None], np.arange(3.0))
    out = draw_sample(panel, SamplePlan(100_000, seed=7, decay=DecayModel.fixed(0.5)))
    freq = np.bincount(out.x[:, 0].astype(int), minlength=3) / 100_000
    np.testing.assert_allclose(freq, [1 / 7, 2 / 7, 4 / 7], atol=0.01)


def test_draw_keeps_rows_intact(synth_panel):
    out = draw_sample(synth_panel, SamplePlan(500, seed=3))
    source = {tuple(row) for row in synth_panel.joint()}
    assert all(tuple(row) in source for row in out.joint())


def test_sample_plan_validation():
    with pytest.raises(ValueError):
        SamplePlan(0)
