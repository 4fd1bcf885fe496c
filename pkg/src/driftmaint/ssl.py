"""Masked-feature reconstruction pretraining of the encoder."""

from __future__ import annotations

import logging

import numpy as np

from .config import DetectorConfig, MaskingConfig
from .data import ChronologicalStream, ScalerParams
from .nn import Adam, DenseNet, backward_and_step, masked_mse, trainable_params
from .seeding import rng_for, seed_for

log = logging.getLogger(__name__)


def mask_batch(x: np.ndarray, p: float, rng: np.random.Generator):
    """Bernoulli(p) mask per entry; masked entries (mask == 1) are zeroed."""
    mask = (rng.random(x.shape) < p).astype(np.float64)
    return x * (1.0 - mask), mask


def build_autoencoder(d: int, cfg: DetectorConfig, seed: int) -> tuple[DenseNet, DenseNet]:
    hidden = list(cfg.encoder_hidden)
    encoder = DenseNet.build([d, *hidden, cfg.latent_dim], seed=seed_for(seed, "encoder"))
    decoder = DenseNet.build([cfg.latent_dim, *reversed(hidden), d], seed=seed_for(seed, "decoder"))
    return encoder, decoder


def pretrain_encoder(stream: ChronologicalStream, scaler: ScalerParams, cfg: MaskingConfig,
                     det_cfg: DetectorConfig, seed: int, K: int | None = None):
    """Train encoder + mirrored decoder on the scaled init windows.

    Returns the frozen encoder and the per-epoch mean loss; the decoder is
    dropped.
    """
    K = stream.K if K is None else K
    x = scaler.transform(np.concatenate([w.x for w in stream.windows[:K]]))
    encoder, decoder = build_autoencoder(stream.d, det_cfg, seed)
    curve = train_autoencoder(encoder, decoder, x, cfg, seed)
    return encoder.freeze(), curve


def train_autoencoder(encoder: DenseNet, decoder: DenseNet, x: np.ndarray,
                      cfg: MaskingConfig, seed: int) -> list[float]:
    modules = [encoder, decoder]
    trainable = (True, True)
    opt = Adam(trainable_params(modules, trainable), lr=cfg.lr)
    rng = rng_for(seed, "ssl")
    n = x.shape[0]
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses, weights = [], []
        for start in range(0, n, cfg.batch_size):
            xb = x[order[start:start + cfg.batch_size]]
            corrupted, mask = mask_batch(xb, cfg.p, rng)
            loss = backward_and_step(modules, corrupted, xb, opt, trainable,
                                     loss="masked_mse", mask=mask, eps=cfg.eps)
            losses.append(loss)
            weights.append(len(xb))
        curve.append(float(np.average(losses, weights=weights)))
        log.debug("ssl epoch %d loss %.5f", epoch + 1, curve[-1])
    return curve


def masked_reconstruction_error(encoder: DenseNet, decoder: DenseNet, x: np.ndarray,
                                p: float, rng: np.random.Generator, eps: float = 1e-8):
    """(model error, all-zeros predictor error) at masked positions of a fresh mask."""
    corrupted, mask = mask_batch(x, p, rng)
    x_hat = decoder.forward(encoder.forward(corrupted))
    return masked_mse(x, x_hat, mask, eps), masked_mse(x, np.zeros_like(x), mask, eps)
