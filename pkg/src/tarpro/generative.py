"""Samplers of the source-feature manifold behind one decode() interface.

Three interchangeable ways to reach points on the learned feature manifold:
a VAE decoder (default), a GAN generator, and a 1-nearest-neighbor lookup
that can only return stored bank rows. The first two map standard-normal
latents to feature space and expose gradients of decode() w.r.t. the latent,
which latent-space projection requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .metric import FeatureBank
from .seeding import derive_rng

__all__ = [
    "VaeModel",
    "GanModel",
    "KnnSampler",
    "VaeTrainConfig",
    "GanTrainConfig",
    "reparameterize",
    "vae_loss",
    "vae_loss_grads",
    "train_vae",
    "train_gan",
    "decode",
    "decode_input_grad",
    "sample_prior",
    "knn_project",
    "nearest_bank_cosine",
]

PROB_CLAMP = 1e-12


@dataclass
class VaeModel:
    encoder: nn.Mlp  # feature -> (mu, logvar) stacked
    decoder: nn.Mlp  # latent -> feature
    latent_dim: int

    def __post_init__(self) -> None:
        if self.encoder.out_dim != 2 * self.latent_dim:
            raise ValueError("encoder must emit 2*latent_dim values")
        if self.decoder.in_dim != self.latent_dim:
            raise ValueError("decoder input dim must equal latent_dim")


@dataclass
class GanModel:
    generator: nn.Mlp  # latent -> feature
    discriminator: nn.Mlp  # feature -> 1 logit
    latent_dim: int

    def __post_init__(self) -> None:
        if self.generator.in_dim != self.latent_dim:
            raise ValueError("generator input dim must equal latent_dim")
        if self.discriminator.out_dim != 1:
            raise ValueError("discriminator must emit a single logit")


@dataclass
class KnnSampler:
    bank: FeatureBank

    def __post_init__(self) -> None:
        if len(self.bank) == 0:
            raise ValueError("1-NN sampler needs a nonempty bank")


Sampler = VaeModel | GanModel | KnnSampler


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def reparameterize(mu: np.ndarray, logvar: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if not (mu.shape == logvar.shape == noise.shape):
        raise ValueError("mu/logvar/noise shapes disagree")
    return mu + np.exp(0.5 * logvar) * noise


def _split_encoding(model: VaeModel, enc_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return enc_out[:, : model.latent_dim], enc_out[:, model.latent_dim :]


def vae_loss(
    model: VaeModel, x: np.ndarray, noise: np.ndarray, kl_weight: float = 1.0
) -> tuple[float, float, float]:
    """(total, recon, kl): elementwise L1+L2 reconstruction plus Gaussian KL."""
    mu, logvar = _split_encoding(model, nn.forward(model.encoder, x))
    z = reparameterize(mu, logvar, noise)
    xhat = nn.forward(model.decoder, z)
    err = x - xhat
    recon = float(np.mean(np.abs(err) + err * err))
    kl = float(np.mean(0.5 * np.sum(mu * mu + np.exp(logvar) - logvar - 1.0, axis=1)))
    return recon + kl_weight * kl, recon, kl


def vae_loss_grads(
    model: VaeModel, x: np.ndarray, noise: np.ndarray, kl_weight: float = 1.0
) -> tuple[tuple[float, float, float], nn.LayerGrads, nn.LayerGrads]:
    """Loss triple plus analytic gradients for encoder and decoder."""
    n = len(x)
    enc_out = nn.forward(model.encoder, x)
    mu, logvar = _split_encoding(model, enc_out)
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    xhat = nn.forward(model.decoder, z)
    err = x - xhat
    recon = float(np.mean(np.abs(err) + err * err))
    kl = float(np.mean(0.5 * np.sum(mu * mu + np.exp(logvar) - logvar - 1.0, axis=1)))
    d_xhat = (-np.sign(err) - 2.0 * err) / err.size
    dec_grads, d_z = nn.backward(model.decoder, z, d_xhat)
    d_mu = d_z + kl_weight * mu / n
    d_logvar = d_z * noise * std * 0.5 + kl_weight * (np.exp(logvar) - 1.0) / (2.0 * n)
    enc_grads, _ = nn.backward(model.encoder, x, np.hstack([d_mu, d_logvar]))
    return (recon + kl_weight * kl, recon, kl), enc_grads, dec_grads


@dataclass
class VaeTrainConfig:
    latent_dim: int = 8
    hidden_width: int = 64
    lr: float = 0.005
    momentum: float = 0.9
    epochs: int = 350
    batch_size: int = 64
    kl_weight: float = 1.0
    seed: int = 0


def init_vae(config: VaeTrainConfig, feature_dim: int) -> VaeModel:
    rng = derive_rng(config.seed, "vae-init")
    encoder = nn.init_mlp(
        [feature_dim, config.hidden_width, 2 * config.latent_dim], rng
    )
    decoder = nn.init_mlp(
        [config.latent_dim, config.hidden_width, feature_dim], rng
    )
    return VaeModel(encoder, decoder, config.latent_dim)


def train_vae(
    bank: FeatureBank, config: VaeTrainConfig
) -> tuple[VaeModel, list[tuple[float, float, float]]]:
    """Fit the sampler to bank rows; history holds per-epoch (total, recon, kl)."""
    if len(bank) == 0:
        raise ValueError("empty feature bank")
    model = init_vae(config, bank.features.shape[1])
    enc_state = nn.SgdState(lr=config.lr, momentum=config.momentum)
    dec_state = nn.SgdState(lr=config.lr, momentum=config.momentum)
    batches = derive_rng(config.seed, "vae-batches")
    noise_rng = derive_rng(config.seed, "vae-noise")
    n = len(bank)
    history: list[tuple[float, float, float]] = []
    for _ in range(config.epochs):
        perm = batches.permutation(n)
        totals = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb = bank.features[idx]
            noise = noise_rng.normal(size=(len(idx), config.latent_dim))
            losses, enc_grads, dec_grads = vae_loss_grads(
                model, xb, noise, config.kl_weight
            )
            nn.optim_step(enc_state, model.encoder, enc_grads)
            nn.optim_step(dec_state, model.decoder, dec_grads)
            totals.append(losses)
        history.append(tuple(np.mean(totals, axis=0)))
    return model, history


@dataclass
class GanTrainConfig:
    latent_dim: int = 8
    hidden_width: int = 64
    lr: float = 0.0002
    beta1: float = 0.5
    epochs: int = 450
    batch_size: int = 64
    seed: int = 0


def init_gan(config: GanTrainConfig, feature_dim: int) -> GanModel:
    rng = derive_rng(config.seed, "gan-init")
    generator = nn.init_mlp(
        [config.latent_dim, config.hidden_width, config.hidden_width, feature_dim], rng
    )
    discriminator = nn.init_mlp([feature_dim, config.hidden_width, 1], rng)
    return GanModel(generator, discriminator, config.latent_dim)


def _bce_logit_upstream(logits: np.ndarray, target: float) -> tuple[float, np.ndarray]:
    """Mean BCE on sigmoid(logits) against a constant target, plus d/dlogits."""
    p = _sigmoid(logits)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(np.mean(-(target * np.log(pc) + (1.0 - target) * np.log1p(-pc))))
    return loss, (p - target) / logits.size


def train_gan(
    bank: FeatureBank, config: GanTrainConfig
) -> tuple[GanModel, list[tuple[float, float, float]]]:
    """Nonsaturating GAN, one discriminator step per generator step.

    History rows are per-epoch (d_loss, g_loss, d_accuracy); the accuracy is
    measured on each batch before the discriminator update.
    """
    if len(bank) == 0:
        raise ValueError("empty feature bank")
    model = init_gan(config, bank.features.shape[1])
    gen_state = nn.AdamState(lr=config.lr, beta1=config.beta1)
    disc_state = nn.AdamState(lr=config.lr, beta1=config.beta1)
    batches = derive_rng(config.seed, "gan-batches")
    noise_rng = derive_rng(config.seed, "gan-noise")
    n = len(bank)
    history: list[tuple[float, float, float]] = []
    for _ in range(config.epochs):
        perm = batches.permutation(n)
        stats = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            real = bank.features[idx]
            noise = noise_rng.normal(size=(len(idx), config.latent_dim))
            fake = nn.forward(model.generator, noise)

            real_logits = nn.forward(model.discriminator, real)
            fake_logits = nn.forward(model.discriminator, fake)
            d_acc = 0.5 * (
                float(np.mean(real_logits > 0.0)) + float(np.mean(fake_logits <= 0.0))
            )
            loss_real, up_real = _bce_logit_upstream(real_logits, 1.0)
            loss_fake, up_fake = _bce_logit_upstream(fake_logits, 0.0)
            gr, _ = nn.backward(model.discriminator, real, up_real)
            gf, _ = nn.backward(model.discriminator, fake, up_fake)
            d_grads = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(gr, gf)]
            nn.optim_step(disc_state, model.discriminator, d_grads)

            noise_g = noise_rng.normal(size=(len(idx), config.latent_dim))
            fake_g = nn.forward(model.generator, noise_g)
            logits_g = nn.forward(model.discriminator, fake_g)
            g_loss, up_g = _bce_logit_upstream(logits_g, 1.0)
            d_fake = nn.input_gradient(model.discriminator, fake_g, up_g)
            g_grads, _ = nn.backward(model.generator, noise_g, d_fake)
            nn.optim_step(gen_state, model.generator, g_grads)

            stats.append((loss_real + loss_fake, g_loss, d_acc))
        history.append(tuple(np.mean(stats, axis=0)))
    return model, history


def decode(sampler: Sampler, u: np.ndarray) -> np.ndarray:
    """Map latent(s) to feature space; undefined for the 1-NN sampler."""
    if isinstance(sampler, KnnSampler):
        raise TypeError("1-NN sampler has no decoder; use knn_project")
    net = sampler.decoder if isinstance(sampler, VaeModel) else sampler.generator
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite latent")
    if u.ndim == 1:
        return nn.forward(net, u[None, :])[0]
    return nn.forward(net, u)


def decode_input_grad(sampler: Sampler, u: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of upstream . decode(u) w.r.t. u; shapes mirror decode()."""
    if isinstance(sampler, KnnSampler):
        raise TypeError("1-NN sampler has no decoder gradient")
    net = sampler.decoder if isinstance(sampler, VaeModel) else sampler.generator
    if u.ndim == 1:
        return nn.input_gradient(net, u[None, :], upstream[None, :])[0]
    return nn.input_gradient(net, u, upstream)


def latent_dim_of(sampler: Sampler) -> int:
    if isinstance(sampler, KnnSampler):
        raise TypeError("1-NN sampler has no latent space")
    return sampler.latent_dim


def sample_prior(sampler: Sampler, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=(n, latent_dim_of(sampler)))


def knn_project(sampler: KnnSampler, z_t: np.ndarray) -> tuple[np.ndarray, int]:
    """Bank row with highest cosine similarity to the query; first row wins ties."""
    norms = np.linalg.norm(sampler.bank.features, axis=1)
    qn = float(np.linalg.norm(z_t))
    if qn == 0.0:
        raise FloatingPointError("zero-norm query")
    sims = (sampler.bank.features @ z_t) / (norms * qn)
    idx = int(np.argmax(sims))
    return sampler.bank.features[idx].copy(), idx


def nearest_bank_cosine(bank_features: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Per-row max cosine similarity of z rows against the bank."""
    bn = bank_features / np.linalg.norm(bank_features, axis=1)[:, None]
    zn = z / np.linalg.norm(z, axis=1)[:, None]
    return (zn @ bn.T).max(axis=1)
