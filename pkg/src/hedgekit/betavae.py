"""Modified beta-VAE hedge.

A tanh encoder maps the N instrument returns to N diagonal-Gaussian latents.
A single bias-free linear layer decodes the latents to the N instruments
plus the target. Training minimizes the squared reconstruction error of all
N+1 outputs plus ``beta_hat`` times the latents' KL divergence from N(0, 1).
The decoder weights split into instrument loadings ``gamma`` (N x N) and
target loadings ``alpha`` (N), and the hedge ratios solve
``gamma @ beta = alpha``.

Everything is plain numpy: exact backpropagation, momentum SGD with
gradient-norm clipping, PCG64 randomness.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import (
    ConfigError,
    IllConditionedGamma,
    NonFiniteLoss,
    NonPositiveSigma,
    ZeroInstruments,
)
from .factors import GAMMA_COND_LIMIT
from .marketdata import ReturnPanel

CLIP_NORM = 10.0
MOMENTUM = 0.9


def kl_std_normal(mu, sigma):
    """KL(N(mu, sigma^2) || N(0, 1)) = 0.5 * (mu^2 + sigma^2 - 1 - ln sigma^2)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    out = 0.5 * (mu ** 2 + sigma ** 2 - 1.0 - np.log(sigma ** 2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class VaeConfig:
    hidden_layers: tuple = (16, 8)
    beta_hat: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 5000
    batch_size: int = 64
    seed: int = 0
    kl_anneal_epochs: int = 500
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if any(h <= 0 for h in self.hidden_layers):
            raise ConfigError("hidden layer widths must be positive")
        if not self.beta_hat >= 0:
            raise ConfigError("beta_hat must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.kl_anneal_epochs < 0:
            raise ConfigError("kl_anneal_epochs must be non-negative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


# -- parameters ---------------------------------------------------------------

def layer_shapes(n_instruments: int, hidden_layers) -> list:
    """Ordered ``(name, shape)`` list for every trainable array."""
    shapes = []
    width = n_instruments
    for i, h in enumerate(hidden_layers):
        shapes += [(f"enc{i}.W", (width, h)), (f"enc{i}.b", (h,))]
        width = h
    shapes += [
        ("mu.W", (width, n_instruments)), ("mu.b", (n_instruments,)),
        ("logvar.W", (width, n_instruments)), ("logvar.b", (n_instruments,)),
        ("dec.W", (n_instruments, n_instruments + 1)),
    ]
    return shapes


class Params:
    """Named array views over one flat parameter vector."""

    def __init__(self, shapes, flat=None):
        self.shapes = list(shapes)
        size = sum(int(np.prod(s)) for _, s in self.shapes)
        self.flat = np.zeros(size) if flat is None else np.asarray(flat, dtype=float)
        if self.flat.size != size:
            raise ValueError(f"expected {size} parameters, got {self.flat.size}")
        self.views = {}
        offset = 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            self.views[name] = self.flat[offset:offset + n].reshape(shape)
            offset += n

    def __getitem__(self, name):
        return self.views[name]

    def zeros_like(self):
        return Params(self.shapes)

    def copy(self):
        return Params(self.shapes, self.flat.copy())


def init_params(n_instruments, hidden_layers, rng) -> Params:
    params = Params(layer_shapes(n_instruments, hidden_layers))
    for name, shape in params.shapes:
        if name.endswith(".W"):
            fan_in, fan_out = shape
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name][...] = rng.uniform(-limit, limit, shape)
    return params


# -- forward / backward -------------------------------------------------------

def encode(params: Params, x, n_hidden):
    acts = [x]
    a = x
    for i in range(n_hidden):
        a = np.tanh(a @ params[f"enc{i}.W"] + params[f"enc{i}.b"])
        acts.append(a)
    mu = a @ params["mu.W"] + params["mu.b"]
    logvar = a @ params["logvar.W"] + params["logvar.b"]
    return mu, logvar, acts


def decode(params: Params, z):
    return z @ params["dec.W"]


def loss_and_grad(params: Params, x, targets, eta, kl_weight, n_hidden, grad=True):
    """Batch-mean loss ``sum((out - t)^2) + kl_weight * sum(KL)`` and its gradient.

    ``eta`` is the standard-normal draw of the reparameterization
    ``z = mu + sigma * eta``; ``eta=None`` runs the deterministic path
    ``z = mu``. Returns ``(total, recon, kl, grads)`` with ``recon`` and
    ``kl`` also batch means.
    """
    b = x.shape[0]
    mu, logvar, acts = encode(params, x, n_hidden)
    sigma = np.exp(0.5 * logvar)
    z = mu if eta is None else mu + sigma * eta
    out = decode(params, z)
    diff = out - targets
    recon = float(np.sum(diff ** 2)) / b
    kl = float(np.sum(0.5 * (mu ** 2 + sigma ** 2 - 1.0 - logvar))) / b
    total = recon + kl_weight * kl
    if not grad:
        return total, recon, kl, None

    g = params.zeros_like()
    d_out = 2.0 * diff / b
    g["dec.W"][...] = z.T @ d_out
    dz = d_out @ params["dec.W"].T
    dmu = dz + kl_weight * mu / b
    dlogvar = kl_weight * 0.5 * (sigma ** 2 - 1.0) / b
    if eta is not None:
        dlogvar = dlogvar + dz * eta * 0.5 * sigma
    a = acts[-1]
    g["mu.W"][...] = a.T @ dmu
    g["mu.b"][...] = dmu.sum(axis=0)
    g["logvar.W"][...] = a.T @ dlogvar
    g["logvar.b"][...] = dlogvar.sum(axis=0)
    da = dmu @ params["mu.W"].T + dlogvar @ params["logvar.W"].T
    for i in range(n_hidden - 1, -1, -1):
        dpre = da * (1.0 - acts[i + 1] ** 2)
        g[f"enc{i}.W"][...] = acts[i].T @ dpre
        g[f"enc{i}.b"][...] = dpre.sum(axis=0)
        if i:
            da = dpre @ params[f"enc{i}.W"].T
    return total, recon, kl, g


# -- model ------------------------------------------------------------------

@dataclass
class VaeModel:
    params: Params
    config: VaeConfig
    n_instruments: int
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    history: dict = field(default_factory=dict)

    @property
    def decoder_weights(self) -> np.ndarray:
        return self.params["dec.W"]

    @property
    def gamma(self) -> np.ndarray:
        return self.params["dec.W"][:, : self.n_instruments]

    @property
    def alpha(self) -> np.ndarray:
        return self.params["dec.W"][:, self.n_instruments]

    @property
    def n_hidden(self) -> int:
        return len(self.config.hidden_layers)

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale

    def encode(self, x):
        """Latent ``(mu, sigma)`` for raw instrument returns."""
        mu, logvar, _ = encode(self.params, self.standardize(x), self.n_hidden)
        return mu, np.exp(0.5 * logvar)

    def decode(self, z):
        return decode(self.params, np.asarray(z, dtype=float))

    def reconstruct(self, x, rng=None, deterministic=True):
        """Standardized ``[instruments | target]`` reconstruction.

        With ``deterministic`` the latent noise is switched off and ``z = mu``.
        """
        mu, sigma = self.encode(x)
        if deterministic:
            return self.decode(mu)
        rng = rng if rng is not None else np.random.default_rng()
        return self.decode(mu + sigma * rng.standard_normal(mu.shape))


def _standardization(panel, standardize):
    x, y = panel.x, panel.y
    if standardize:
        xm, xs = x.mean(axis=0), x.std(axis=0, ddof=0)
        ym, ys = float(y.mean()), float(y.std(ddof=0))
        xs = np.where(xs > 0, xs, 1.0)
        ys = ys if ys > 0 else 1.0
    else:
        xm, xs = np.zeros(x.shape[1]), np.ones(x.shape[1])
        ym, ys = 0.0, 1.0
    return xm, xs, ym, ys


def train(panel: ReturnPanel, config: VaeConfig = VaeConfig()) -> VaeModel:
    """Fit the modified beta-VAE by minibatch momentum SGD.

    The KL weight ramps linearly from 0 to ``beta_hat`` over
    ``kl_anneal_epochs``. ``history`` holds per-epoch means of the
    reconstruction and KL terms, the ramped weight in force, and
    ``total = recon + beta_hat * kl``.
    """
    if panel.n_instruments < 1:
        raise ZeroInstruments("the VAE needs at least one instrument")
    if panel.n_obs < 1:
        raise ConfigError("empty panel")
    n = panel.n_instruments
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    xm, xs, ym, ys = _standardization(panel, config.standardize)
    x_in = (panel.x - xm) / xs
    targets = np.column_stack([x_in, (panel.y - ym) / ys])
    params = init_params(n, config.hidden_layers, rng)
    model = VaeModel(params, config, n, xm, xs, ym, ys)
    n_hidden = len(config.hidden_layers)

    velocity = np.zeros_like(params.flat)
    k = panel.n_obs
    bs = min(int(config.batch_size), k)
    hist = {"recon": [], "kl": [], "kl_weight": [], "total": []}
    model.history = hist
    for epoch in range(int(config.epochs)):
        if config.kl_anneal_epochs:
            weight = config.beta_hat * min(1.0, (epoch + 1) / config.kl_anneal_epochs)
        else:
            weight = config.beta_hat
        order = rng.permutation(k)
        recon_sum = kl_sum = 0.0
        for start in range(0, k, bs):
            idx = order[start:start + bs]
            eta = rng.standard_normal((idx.size, n))
            _, recon, kl, g = loss_and_grad(params, x_in[idx], targets[idx], eta, weight, n_hidden)
            if not (math.isfinite(recon) and math.isfinite(kl)):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}", history=hist)
            norm = float(np.sqrt(g.flat @ g.flat))
            scale = CLIP_NORM / norm if norm > CLIP_NORM else 1.0
            velocity *= MOMENTUM
            velocity -= config.learning_rate * scale * g.flat
            params.flat += velocity
            recon_sum += recon * idx.size
            kl_sum += kl * idx.size
        recon_mean, kl_mean = recon_sum / k, kl_sum / k
        hist["recon"].append(recon_mean)
        hist["kl"].append(kl_mean)
        hist["kl_weight"].append(weight)
        hist["total"].append(recon_mean + config.beta_hat * kl_mean)
        if not np.all(np.isfinite(params.flat)):
            raise NonFiniteLoss(f"parameters diverged at epoch {epoch}", history=hist)
    return model


def extract_hedge_vae(model: VaeModel) -> np.ndarray:
    """Hedge ratios in raw return units from the decoder weights.

    Solves ``gamma @ b = alpha`` in standardized units, then rescales by
    ``y_scale / x_scale``; the rescaling is exact because the decoder is
    linear.
    """
    gamma = np.asarray(model.gamma, dtype=float)
    cond = float(np.linalg.cond(gamma))
    if not np.isfinite(cond) or cond >= GAMMA_COND_LIMIT:
        raise IllConditionedGamma(cond)
    beta_std = np.linalg.solve(gamma, np.asarray(model.alpha, dtype=float))
    return beta_std * model.y_scale / model.x_scale


def train_restarts(panel, config: VaeConfig, restarts: int = 1):
    """Train ``restarts`` models with seeds ``seed, seed+1, ...``.

    Returns ``(best_model, betas)`` where ``best_model`` has the lowest final
    total loss and ``betas`` stacks each restart's hedge ratios (NaN rows
    where extraction failed), in seed order.
    """
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    models, betas = [], []
    for r in range(restarts):
        cfg = VaeConfig(**{**asdict(config), "seed": int(config.seed) + r})
        model = train(panel, cfg)
        models.append(model)
        try:
            betas.append(extract_hedge_vae(model))
        except IllConditionedGamma:
            betas.append(np.full(panel.n_instruments, np.nan))
    finite = [i for i, b in enumerate(betas) if np.all(np.isfinite(b))]
    pool = finite or list(range(restarts))
    best = min(pool, key=lambda i: models[i].history["total"][-1])
    return models[best], np.vstack(betas)


# -- text dump ----------------------------------------------------------------

DUMP_MAGIC = "hedgekit-vae 1"


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dump_model(model: VaeModel, path) -> None:
    """Write weights and scaling as a flat text file (see README for layout)."""
    cfg = model.config
    lines = [
        DUMP_MAGIC,
        f"instruments {model.n_instruments}",
        f"hidden {','.join(str(h) for h in cfg.hidden_layers)}",
        f"beta_hat {cfg.beta_hat!r}",
        f"seed {int(cfg.seed)}",
        f"x_mean {_fmt(model.x_mean)}",
        f"x_scale {_fmt(model.x_scale)}",
        f"y_mean {model.y_mean!r}",
        f"y_scale {model.y_scale!r}",
    ]
    for name, shape in model.params.shapes:
        dims = shape if len(shape) == 2 else (1, shape[0])
        lines.append(f"array {name} {dims[0]} {dims[1]}")
        lines.append(_fmt(model.params[name]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path, config: Optional[VaeConfig] = None) -> VaeModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != DUMP_MAGIC:
        raise ValueError(f"{path}: not a hedgekit VAE dump")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("array "):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    n = int(header["instruments"])
    hidden = tuple(int(h) for h in header["hidden"].split(",") if h)
    if config is None:
        config = VaeConfig(hidden_layers=hidden, beta_hat=float(header["beta_hat"]),
                           seed=int(header["seed"]))
    arrays = []
    while i < len(lines):
        _, name, rows, cols = lines[i].split()
        values = np.array([float(v) for v in lines[i + 1].split()])
        if values.size != int(rows) * int(cols):
            raise ValueError(f"{path}: array {name} has {values.size} values")
        arrays.append((name, values))
        i += 2
    shapes = layer_shapes(n, hidden)
    if [name for name, _ in shapes] != [name for name, _ in arrays]:
        raise ValueError(f"{path}: layer list does not match the declared architecture")
    params = Params(shapes, np.concatenate([v for _, v in arrays]))
    return VaeModel(
        params, config, n,
        np.array([float(v) for v in header["x_mean"].split()]),
        np.array([float(v) for v in header["x_scale"].split()]),
        float(header["y_mean"]), float(header["y_scale"]),
    )
