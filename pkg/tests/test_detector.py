import logging

import numpy as np
import pytest

from driftmaint.config import DetectorConfig, EpochsConfig, UpdateConfig
from driftmaint.detector import ACTION_COSTS, Action, Detector, apply_action, warm_start
from driftmaint.metrics import ConfusionCounts, balanced_accuracy
from driftmaint.errors import ConfigError
from driftmaint.nn import Adapter, DenseNet, Layer

DET = DetectorConfig(latent_dim=6, encoder_hidden=(12,), bottleneck=3, head_hidden=8)
UPD = UpdateConfig(batch_size=32)


@pytest.fixture
def det():
    enc = DenseNet.build([5, 12, 6], seed=0).freeze()
    return Detector.build(enc, DET, seed=1)


@pytest.fixture
def batch():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    x = rng.normal(size=(200, 5)) + 2.0 * y[:, None]
    return x, y


def test_cost_table():
    assert [ACTION_COSTS[a] for a in Action] == [0.0, 0.5, 1.0, 1.5, 2.5]
    assert [a.label for a in Action] == ["A0", "A1", "A2", "A3", "A4"]


@pytest.mark.parametrize("action, adapter_changes, head_changes", [
    (Action.KEEP, False, False),
    (Action.HEAD, False, True),
    (Action.ADAPTER, True, False),
    (Action.JOINT, True, True),
    (Action.RESET_JOINT, True, True),
])
def test_action_scope(det, batch, action, adapter_changes, head_changes):
    before = det.digests()
    loss = apply_action(det, action, *batch, UPD, seed=0)
    after = det.digests()
    assert after["encoder"] == before["encoder"]
    assert (after["adapter"] != before["adapter"]) == adapter_changes
    assert (after["head"] != before["head"]) == head_changes
    assert (loss is None) == (action == Action.KEEP)


def test_reset_with_zero_epochs_restores_snapshot(det, batch):
    apply_action(det, Action.ADAPTER, *batch, UPD, seed=0)
    assert det.adapter.digest() != det.adapter_init.digest()
    zero = UpdateConfig(epochs=EpochsConfig(joint=0))
    apply_action(det, Action.RESET_JOINT, *batch, zero, seed=0)
    assert det.adapter.digest() == det.adapter_init.digest()


def test_empty_split_is_keep(det, caplog):
    before = det.digests()
    with caplog.at_level(logging.WARNING):
        loss = apply_action(det, Action.JOINT, np.zeros((0, 5)), np.zeros(0), UPD, seed=0)
    assert loss is None and det.digests() == before
    assert "treated as A0" in caplog.text


def test_saturated_head_predicts_malware():
    enc = DenseNet.build([3, 4], seed=0).freeze()
    head = DenseNet([Layer(np.zeros((4, 2)), np.array([-50.0, 50.0]), "identity")])
    d = Detector(enc, Adapter.build(4, 2), head)
    labels, probs = d.predict(np.random.default_rng(1).normal(size=(9, 3)))
    assert (labels == 1).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-15)


def test_probabilities_sum_to_one(det, batch):
    _, probs = det.predict(batch[0])
    assert probs.shape == (200, 2) and (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_updates_are_deterministic(det, batch):
    other = det.copy()
    apply_action(det, Action.JOINT, *batch, UPD, seed=3)
    apply_action(other, Action.JOINT, *batch, UPD, seed=3)
    assert det.digests() == other.digests()


def test_copy_shares_encoder_only(det, batch):
    other = det.copy()
    assert other.encoder is det.encoder
    apply_action(other, Action.JOINT, *batch, UPD, seed=0)
    assert other.digests()["head"] != det.digests()["head"]


def test_warm_start_learns(det):
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 5000)
    x = rng.normal(size=(5000, 5)) + 2.0 * y[:, None]
    curve = warm_start(det, x, y, UPD, seed=0)
    assert len(curve) == 5 and curve[-1] < curve[0]
    labels, _ = det.predict(x)
    assert balanced_accuracy(ConfusionCounts.from_labels(y, labels)) > 0.9


def test_budget_enforced(det, batch):
    with pytest.raises(ConfigError):
        apply_action(det, Action.HEAD, *batch, UPD, seed=0, budget=10)


def test_save_load(tmp_path, det, batch):
    apply_action(det, Action.JOINT, *batch, UPD, seed=0)
    det.save(tmp_path / "det.npz")
    loaded = Detector.load(tmp_path / "det.npz")
    assert loaded.digests() == det.digests()
    np.testing.assert_array_equal(loaded.predict(batch[0])[1], det.predict(batch[0])[1])
