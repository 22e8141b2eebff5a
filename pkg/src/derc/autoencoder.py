"""Stacked conventional autoencoder and variational autoencoder pretraining.

Both reduce prescreened beta-value matrices to a low-dimensional latent
space; the encoder (AE) or the mean head (VAE) is the deterministic map
used downstream for clustering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .network import (
    DenseLayer,
    NetworkParams,
    SgdMomentum,
    backward_layers,
    collect_params,
    flatten_grads,
    forward_layers,
    mse_loss,
)

DEFAULT_HIDDEN_DIMS = (2000, 500, 70, 10)


@dataclass
class AeSpec:
    """Layer widths for the symmetric encoder/decoder stacks.

    layer_dims starts at the input width and ends at the latent width,
    e.g. [10153, 2000, 500, 70, 10]. The decoder mirrors the encoder and
    ends in a sigmoid so outputs stay in the beta-value range.
    """

    layer_dims: list[int] | None = None

    def resolve(self, d_in: int) -> list[int]:
        dims = self.layer_dims if self.layer_dims is not None else [d_in, *DEFAULT_HIDDEN_DIMS]
        if dims[0] != d_in:
            raise ValidationError(
                f"spec input width {dims[0]} does not match data width {d_in}"
            )
        if dims[-1] >= d_in:
            raise ValidationError(
                f"latent dim {dims[-1]} must be smaller than input dim {d_in}"
            )
        return list(dims)


@dataclass
class PretrainConfig:
    epochs: int = 300
    lr: float = 1.0
    momentum: float = 0.0
    batch_size: int = 8
    seed: int = 0
    vae_recon_weight: float = 0.8
    validation_fraction: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must be in [0, 1)")
        if not 0.0 <= self.vae_recon_weight <= 1.0:
            raise ValidationError("vae_recon_weight must be in [0, 1]")


@dataclass
class VaeParams:
    """Encoder trunk plus linear mean / log-variance heads and the decoder."""

    trunk_layers: list[DenseLayer]
    mu_head: DenseLayer
    logvar_head: DenseLayer
    decoder_layers: list[DenseLayer]

    @property
    def input_dim(self) -> int:
        return self.trunk_layers[0].n_in

    @property
    def latent_dim(self) -> int:
        return self.mu_head.n_out

    def all_layers(self) -> list[DenseLayer]:
        return [*self.trunk_layers, self.mu_head, self.logvar_head,
                *self.decoder_layers]


def build_ae(dims: list[int], rng: np.random.Generator) -> NetworkParams:
    encoder = [
        DenseLayer.create(dims[i], dims[i + 1], "relu", rng)
        for i in range(len(dims) - 1)
    ]
    rev = dims[::-1]
    decoder = [
        DenseLayer.create(rev[i], rev[i + 1],
                          "sigmoid" if i == len(rev) - 2 else "relu", rng)
        for i in range(len(rev) - 1)
    ]
    return NetworkParams(encoder_layers=encoder, decoder_layers=decoder)


def build_vae(dims: list[int], rng: np.random.Generator) -> VaeParams:
    trunk = [
        DenseLayer.create(dims[i], dims[i + 1], "relu", rng)
        for i in range(len(dims) - 2)
    ]
    mu_head = DenseLayer.create(dims[-2], dims[-1], "linear", rng)
    logvar_head = DenseLayer.create(dims[-2], dims[-1], "linear", rng)
    rev = dims[::-1]
    decoder = [
        DenseLayer.create(rev[i], rev[i + 1],
                          "sigmoid" if i == len(rev) - 2 else "relu", rng)
        for i in range(len(rev) - 1)
    ]
    return VaeParams(trunk_layers=trunk, mu_head=mu_head,
                     logvar_head=logvar_head, decoder_layers=decoder)


def encode(params: NetworkParams | VaeParams, x: np.ndarray) -> np.ndarray:
    """Deterministic latent map: encoder output (AE) or mean vector (VAE)."""
    x = np.asarray(x, dtype=float)
    if isinstance(params, VaeParams):
        h, _ = forward_layers(params.trunk_layers, x)
        mu, _ = forward_layers([params.mu_head], h)
        return mu
    z, _ = forward_layers(params.encoder_layers, x)
    return z


def reconstruct(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    z, _ = forward_layers(params.encoder_layers, np.asarray(x, dtype=float))
    r, _ = forward_layers(params.decoder_layers, z)
    return r


def vae_kl(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL divergence from N(mu, sigma) to N(0, 1), summed over dimensions.

    Nonnegative; zero iff mu = 0 and log_var = 0.
    """
    mu = np.asarray(mu, dtype=float)
    log_var = np.asarray(log_var, dtype=float)
    if mu.shape != log_var.shape:
        raise ValidationError("mu and log_var must have equal shapes")
    return float(-0.5 * np.sum(1.0 + log_var - mu * mu - np.exp(log_var)))


def vae_forward(params: VaeParams, x: np.ndarray, eps: np.ndarray):
    """Reparameterised forward pass; returns reconstruction and caches."""
    h, trunk_cache = forward_layers(params.trunk_layers, x)
    mu, mu_cache = forward_layers([params.mu_head], h)
    lv, lv_cache = forward_layers([params.logvar_head], h)
    z = mu + np.exp(0.5 * lv) * eps
    r, dec_cache = forward_layers(params.decoder_layers, z)
    cache = dict(trunk=trunk_cache, mu=mu_cache, lv=lv_cache, dec=dec_cache,
                 mu_val=mu, lv_val=lv, eps=eps, z=z)
    return r, cache


def vae_loss_and_grads(params: VaeParams, x: np.ndarray, eps: np.ndarray,
                       recon_weight: float):
    """Weighted loss w*MSE + (1-w)*mean-KL and gradients for every tensor.

    Gradient order matches params.all_layers().
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    r, cache = vae_forward(params, x, eps)
    mse, dmse = mse_loss(x, r)
    mu, lv = cache["mu_val"], cache["lv_val"]
    kl_mean = vae_kl(mu, lv) / n
    w = recon_weight
    loss = w * mse + (1.0 - w) * kl_mean

    dec_grads, dz = backward_layers(params.decoder_layers, cache["dec"], w * dmse)
    dmu = dz + (1.0 - w) * mu / n
    dlv = dz * cache["eps"] * 0.5 * np.exp(0.5 * lv) \
        + (1.0 - w) * (np.exp(lv) - 1.0) / (2.0 * n)
    mu_grads, dh_mu = backward_layers([params.mu_head], cache["mu"], dmu)
    lv_grads, dh_lv = backward_layers([params.logvar_head], cache["lv"], dlv)
    trunk_grads, _ = backward_layers(params.trunk_layers, cache["trunk"],
                                     dh_mu + dh_lv)
    grads = [*trunk_grads, *mu_grads, *lv_grads, *dec_grads]
    return loss, grads, dict(mse=mse, kl_mean=kl_mean, recon=r)


def _split_train_val(n: int, fraction: float, rng: np.random.Generator):
    if fraction <= 0.0:
        return np.arange(n), np.array([], dtype=int)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def pretrain_ae(values: np.ndarray, spec: AeSpec, cfg: PretrainConfig):
    """Train the conventional autoencoder; returns (params, history).

    History rows are (epoch, train_loss, val_loss); val_loss is NaN when
    no validation split is configured.
    """
    cfg.validate()
    x = np.asarray(values, dtype=float)
    dims = spec.resolve(x.shape[1])
    rng = np.random.default_rng(cfg.seed)
    params = build_ae(dims, rng)
    layers = params.all_layers()
    opt = SgdMomentum(collect_params(layers), cfg.lr, cfg.momentum)

    train_idx, val_idx = _split_train_val(x.shape[0], cfg.validation_fraction, rng)
    x_train, x_val = x[train_idx], x[val_idx]
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(x_train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(perm), cfg.batch_size):
            batch = x_train[perm[start:start + cfg.batch_size]]
            z, enc_cache = forward_layers(params.encoder_layers, batch)
            r, dec_cache = forward_layers(params.decoder_layers, z)
            loss, dmse = mse_loss(batch, r)
            dec_grads, dz = backward_layers(params.decoder_layers, dec_cache, dmse)
            enc_grads, _ = backward_layers(params.encoder_layers, enc_cache, dz)
            opt.step(flatten_grads([*enc_grads, *dec_grads]))
            epoch_loss += loss
            n_batches += 1
        val_loss = float("nan")
        if len(x_val):
            val_loss = mse_loss(x_val, reconstruct(params, x_val))[0]
        history.append((epoch, epoch_loss / max(n_batches, 1), val_loss))
    return params, history


def pretrain_vae(values: np.ndarray, spec: AeSpec, cfg: PretrainConfig):
    """Train the variational autoencoder; returns (params, history)."""
    cfg.validate()
    x = np.asarray(values, dtype=float)
    dims = spec.resolve(x.shape[1])
    rng = np.random.default_rng(cfg.seed)
    params = build_vae(dims, rng)
    opt = SgdMomentum(collect_params(params.all_layers()), cfg.lr, cfg.momentum)

    train_idx, val_idx = _split_train_val(x.shape[0], cfg.validation_fraction, rng)
    x_train, x_val = x[train_idx], x[val_idx]
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(x_train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(perm), cfg.batch_size):
            batch = x_train[perm[start:start + cfg.batch_size]]
            eps = rng.standard_normal((batch.shape[0], dims[-1]))
            loss, grads, _ = vae_loss_and_grads(params, batch, eps,
                                                cfg.vae_recon_weight)
            opt.step(flatten_grads(grads))
            epoch_loss += loss
            n_batches += 1
        val_loss = float("nan")
        if len(x_val):
            eps_val = rng.standard_normal((x_val.shape[0], dims[-1]))
            r_val, _ = vae_forward(params, x_val, eps_val)
            val_loss = mse_loss(x_val, r_val)[0]
        history.append((epoch, epoch_loss / max(n_batches, 1), val_loss))
    return params, history


def vae_reconstruction_loss(params: VaeParams, x: np.ndarray,
                            seed: int = 0, use_mean: bool = False) -> float:
    """Reconstruction MSE with sampled z (training-like) or the mean vector."""
    x = np.asarray(x, dtype=float)
    if use_mean:
        eps = np.zeros((x.shape[0], params.latent_dim))
    else:
        eps = np.random.default_rng(seed).standard_normal(
            (x.shape[0], params.latent_dim))
    r, _ = vae_forward(params, x, eps)
    return mse_loss(x, r)[0]
