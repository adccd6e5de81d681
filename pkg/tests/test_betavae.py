import numpy as np
import pytest

from hedgekit.betavae import (
    Params,
    VaeConfig,
    VaeModel,
    dump_model,
    extract_hedge_vae,
    init_params,
    kl_std_normal,
    layer_shapes,
    load_model,
    loss_and_grad,
    train,
    train_restarts,
)
from hedgekit.exceptions import (
    ConfigError,
    IllConditionedGamma,
    NonPositiveSigma,
    ZeroInstruments,
)
from hedgekit.marketdata import ReturnPanel


@pytest.mark.parametrize("mu,sigma,expected", [
    (0.0, 1.0, 0.0),
    (1.0, 1.0, 0.5),
    (0.0, 2.0, 0.5 * (4.0 - 1.0 - np.log(4.0))),
])
def test_kl_values(mu, sigma, expected):
    assert kl_std_normal(mu, sigma) == pytest.approx(expected, abs=1e-15)


def test_kl_reference_value():
    assert kl_std_normal(0.0, 2.0) == pytest.approx(0.806853, abs=1e-6)


def test_kl_rejects_bad_sigma():
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(NonPositiveSigma):
            kl_std_normal(0.0, bad)


def test_kl_vectorized_nonnegative(rng):
    vals = kl_std_normal(rng.normal(size=100), rng.uniform(0.1, 3.0, 100))
    assert vals.shape == (100,) and np.all(vals >= 0)


def _setup(rng, n=2, k=5, hidden=(4, 3)):
    params = init_params(n, hidden, rng)
    params.flat += 0.1 * rng.normal(size=params.flat.size)
    x = rng.normal(size=(k, n))
    targets = rng.normal(size=(k, n + 1))
    eta = rng.normal(size=(k, n))
    return params, x, targets, eta


@pytest.mark.parametrize("stochastic", [True, False])
def test_gradient_matches_finite_differences(rng, stochastic):
    params, x, targets, eta = _setup(rng)
    eta = eta if stochastic else None
    _, _, _, g = loss_and_grad(params, x, targets, eta, 0.7, 2)
    num = np.empty_like(params.flat)
    h = 1e-6
    for i in range(params.flat.size):
        old = params.flat[i]
        params.flat[i] = old + h
        up = loss_and_grad(params, x, targets, eta, 0.7, 2, grad=False)[0]
        params.flat[i] = old - h
        down = loss_and_grad(params, x, targets, eta, 0.7, 2, grad=False)[0]
        params.flat[i] = old
        num[i] = (up - down) / (2 * h)
    rel = np.abs(g.flat - num) / np.maximum(np.maximum(np.abs(g.flat), np.abs(num)), 1e-8)
    assert rel.max() < 1e-5


def test_loss_decomposition(rng):
    params, x, targets, eta = _setup(rng)
    total, recon, kl, _ = loss_and_grad(params, x, targets, eta, 0.3, 2)
    assert total == pytest.approx(recon + 0.3 * kl, abs=1e-10)
    assert kl >= 0


def test_deterministic_path_uses_mean(rng):
    params, x, targets, _ = _setup(rng)
    from hedgekit.betavae import decode, encode
    mu, _, _ = encode(params, x, 2)
    expected = np.sum((decode(params, mu) - targets) ** 2) / x.shape[0]
    assert loss_and_grad(params, x, targets, None, 0.0, 2, grad=False)[1] == pytest.approx(
        expected, abs=1e-12)


def test_decoder_is_linear(rng):
    params = init_params(3, (5,), rng)
    from hedgekit.betavae import decode
    z1, z2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(decode(params, 2.0 * z1 - 0.5 * z2),
                               2.0 * decode(params, z1) - 0.5 * decode(params, z2), atol=1e-12)


def test_layer_shapes():
    names = [n for n, _ in layer_shapes(3, (16, 8))]
    assert names == ["enc0.W", "enc0.b", "enc1.W", "enc1.b", "mu.W", "mu.b",
                     "logvar.W", "logvar.b", "dec.W"]
    assert dict(layer_shapes(3, (16, 8)))["dec.W"] == (3, 4)


def test_params_views_share_memory():
    p = Params(layer_shapes(2, (3,)))
    p["dec.W"][...] = 1.0
    assert p.flat[-6:].tolist() == [1.0] * 6


def _tiny_panel(seed=0, k=64):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.01, (k, 2))
    y = x @ [0.6, 0.4] + rng.normal(0, 0.001, k)
    return ReturnPanel.from_arrays(x, y)


def test_training_reduces_reconstruction():
    model = train(_tiny_panel(), VaeConfig(hidden_layers=(8,), beta_hat=0.0, epochs=400,
                                           batch_size=16, learning_rate=1e-2))
    recon = model.history["recon"]
    assert recon[-1] * 10 <= recon[0]


def test_training_is_deterministic():
    cfg = VaeConfig(hidden_layers=(4,), epochs=30, batch_size=16, seed=5)
    a, b = train(_tiny_panel(), cfg), train(_tiny_panel(), cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.params.flat, b.params.flat)


def test_history_fields():
    cfg = VaeConfig(hidden_layers=(4,), epochs=20, batch_size=16, kl_anneal_epochs=10,
                    beta_hat=0.5)
    h = train(_tiny_panel(), cfg).history
    assert len(h["total"]) == 20
    assert h["kl_weight"][0] == pytest.approx(0.05) and h["kl_weight"][-1] == 0.5
    np.testing.assert_allclose(h["total"], np.add(h["recon"], np.multiply(0.5, h["kl"])),
                               atol=1e-12)


def _hand_model(gamma, alpha, x_scale=None, y_scale=1.0):
    n = len(alpha)
    params = Params(layer_shapes(n, (2,)))
    params["dec.W"][...] = np.column_stack([gamma, alpha])
    xs = np.ones(n) if x_scale is None else np.asarray(x_scale, dtype=float)
    return VaeModel(params, VaeConfig(hidden_layers=(2,)), n, np.zeros(n), xs, 0.0, y_scale)


def test_extract_hand_built():
    model = _hand_model(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(extract_hedge_vae(model), [0.5, 0.25], atol=1e-15)


def test_extract_unstandardizes():
    # standardized hedge b maps to raw b * s_y / s_x
    model = _hand_model(np.eye(2), np.array([0.3, -0.2]), x_scale=[0.01, 0.02], y_scale=0.015)
    np.testing.assert_allclose(extract_hedge_vae(model),
                               [0.3 * 0.015 / 0.01, -0.2 * 0.015 / 0.02], atol=1e-14)


def test_extract_ill_conditioned():
    with pytest.raises(IllConditionedGamma):
        extract_hedge_vae(_hand_model(np.ones((2, 2)), np.ones(2)))


@pytest.mark.slow
def test_trained_hedge_recovers_truth():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.01, (1000, 2))
    y = x @ [0.6, 0.4] + rng.normal(0, 0.01, 1000)
    model = train(ReturnPanel.from_arrays(x, y), VaeConfig(seed=0))
    np.testing.assert_allclose(extract_hedge_vae(model), [0.6, 0.4], atol=0.1)


def test_restarts_pick_lowest_loss():
    cfg = VaeConfig(hidden_layers=(4,), epochs=40, batch_size=16, seed=3)
    best, betas = train_restarts(_tiny_panel(), cfg, restarts=3)
    finals = [train(_tiny_panel(), VaeConfig(**{**cfg.__dict__, "seed": 3 + r}))
              .history["total"][-1] for r in range(3)]
    assert betas.shape == (3, 2)
    assert best.history["total"][-1] == min(finals)
    with pytest.raises(ConfigError):
        train_restarts(_tiny_panel(), cfg, restarts=0)


def test_dump_round_trip(tmp_path):
    model = train(_tiny_panel(), VaeConfig(hidden_layers=(5, 3), epochs=5, batch_size=16))
    dump_model(model, tmp_path / "m.txt")
    text = (tmp_path / "m.txt").read_text()
    assert text.startswith("hedgekit-vae 1\n")
    loaded = load_model(tmp_path / "m.txt")
    np.testing.assert_array_equal(loaded.params.flat, model.params.flat)
    np.testing.assert_array_equal(loaded.x_scale, model.x_scale)
    assert loaded.y_scale == model.y_scale
    np.testing.assert_array_equal(extract_hedge_vae(loaded), extract_hedge_vae(model))
    x = _tiny_panel().x
    np.testing.assert_array_equal(loaded.reconstruct(x), model.reconstruct(x))


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.txt").write_text("something else\n")
    with pytest.raises(ValueError):
        load_model(tmp_path / "bad.txt")


def test_config_validation():
    for kw in ({"hidden_layers": (0,)}, {"beta_hat": -1}, {"learning_rate": 0},
               {"epochs": 0}, {"batch_size": 0}, {"seed": -1}):
        with pytest.raises(ConfigError):
            VaeConfig(**kw)


def test_zero_instruments():
    panel = ReturnPanel.from_arrays(np.empty((10, 0)), np.zeros(10))
    with pytest.raises(ZeroInstruments):
        train(panel, VaeConfig(epochs=1))


def test_decoder_unit_vector_probe(rng):
    from hedgekit.betavae import decode
    params = init_params(3, (4,), rng)
    np.testing.assert_array_equal(decode(params, np.eye(3)), params["dec.W"])


def test_unstandardize_matches_unscaled_fit_on_balanced_data():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 2))
    y = x @ [0.6, 0.4] + 0.3 * rng.normal(size=200)
    # exactly balanced columns: standardizing is then the identity map
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    y = (y - y.mean()) / y.std()
    panel = ReturnPanel.from_arrays(x, y)
    base = dict(hidden_layers=(4,), epochs=30, batch_size=32, seed=1)
    scaled = train(panel, VaeConfig(standardize=True, **base))
    plain = train(panel, VaeConfig(standardize=False, **base))
    np.testing.assert_allclose(scaled.x_scale, 1.0, atol=1e-12)
    np.testing.assert_allclose(extract_hedge_vae(scaled), extract_hedge_vae(plain), atol=1e-8)
