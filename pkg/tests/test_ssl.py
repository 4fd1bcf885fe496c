import numpy as np
import pytest

from driftmaint.config import DetectorConfig, MaskingConfig
from driftmaint.data import ChronologicalStream, Window, fit_scaler
from driftmaint.nn import masked_mse
from driftmaint.ssl import (build_autoencoder, mask_batch, masked_reconstruction_error, pretrain_encoder,
                            train_autoencoder)

DET = DetectorConfig(latent_dim=8, encoder_hidden=(32, 16), bottleneck=4, head_hidden=8)


def test_mask_rate():
    rng = np.random.default_rng(0)
    _, mask = mask_batch(np.ones((1000, 100)), 0.3, rng)
    assert abs(mask.mean() - 0.3) <= 0.01


def test_mask_zeroes_masked_entries_only():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 7))
    corrupted, mask = mask_batch(x, 0.5, rng)
    np.testing.assert_array_equal(corrupted[mask == 1], 0.0)
    np.testing.assert_array_equal(corrupted[mask == 0], x[mask == 0])


def test_vanishing_mask_probability():
    x = np.random.default_rng(2).normal(size=(20, 5))
    corrupted, mask = mask_batch(x, 1e-9, np.random.default_rng(3))
    assert not mask.any()
    np.testing.assert_array_equal(corrupted, x)


def test_masked_mse_examples():
    assert masked_mse(np.array([[1.0, 0.0, -1.0]]), np.zeros((1, 3)), np.array([[1.0, 0.0, 1.0]])) == pytest.approx(1.0, abs=1e-7)
    x = np.arange(6.0).reshape(2, 3)
    assert masked_mse(x, x, np.ones((2, 3))) == 0.0
    assert masked_mse(x, np.zeros_like(x), np.zeros((2, 3))) == 0.0


def test_masked_mse_ignores_unmasked_positions():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 5))
    mask = (rng.random((8, 5)) < 0.4).astype(float)
    x_hat = rng.normal(size=(8, 5))
    moved = x_hat + 10.0 * (1 - mask)
    assert masked_mse(x, moved, mask) == masked_mse(x, x_hat, mask)


def test_zero_epochs_keeps_initialization(small_stream):
    scaler = fit_scaler(small_stream)
    enc, curve = pretrain_encoder(small_stream, scaler, MaskingConfig(epochs=0), DET, seed=5)
    fresh, _ = build_autoencoder(small_stream.d, DET, seed=5)
    assert curve == []
    assert enc.digest() == fresh.digest()
    assert enc.frozen


def test_pretraining_is_deterministic(small_stream):
    scaler = fit_scaler(small_stream)
    cfg = MaskingConfig(epochs=2, batch_size=64)
    a, ca = pretrain_encoder(small_stream, scaler, cfg, DET, seed=1)
    b, cb = pretrain_encoder(small_stream, scaler, cfg, DET, seed=1)
    assert a.digest() == b.digest() and ca == cb


def test_training_beats_zero_predictor(small_stream):
    scaler = fit_scaler(small_stream)
    x = scaler.transform(np.concatenate([w.x for w in small_stream.init_windows()]))
    enc, dec = build_autoencoder(small_stream.d, DET, seed=0)
    curve = train_autoencoder(enc, dec, x, MaskingConfig(epochs=30, batch_size=64), seed=0)
    assert curve[-1] < curve[0]
    model, zeros = masked_reconstruction_error(enc, dec, x, 0.3, np.random.default_rng(9))
    assert model < zeros


def test_pretraining_uses_only_init_windows(small_stream):
    scaler = fit_scaler(small_stream)
    ws = list(small_stream.windows)
    ws[-1] = Window(ws[-1].index, ws[-1].x * 3.0 + 7.0, ws[-1].y)
    other = ChronologicalStream(tuple(ws), small_stream.K)
    cfg = MaskingConfig(epochs=1, batch_size=64)
    a, _ = pretrain_encoder(small_stream, scaler, cfg, DET, seed=2)
    b, _ = pretrain_encoder(other, scaler, cfg, DET, seed=2)
    assert a.digest() == b.digest()
