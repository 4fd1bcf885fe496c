"""The maintained classifier head(adapter(encoder(x))) and its update operators."""

from __future__ import annotations

import logging
from enum import IntEnum
from pathlib import Path

import numpy as np

from .config import DetectorConfig, UpdateConfig
from .errors import ConfigError
from .nn import (Adam, Adapter, DenseNet, backward_and_step, cross_entropy, save_state, softmax,
                 trainable_params)
from .seeding import rng_for, seed_for

log = logging.getLogger(__name__)


class Action(IntEnum):
    KEEP = 0
    HEAD = 1
    ADAPTER = 2
    JOINT = 3
    RESET_JOINT = 4

    @property
    def cost(self) -> float:
        return ACTION_COSTS[self]

    @property
    def label(self) -> str:
        return f"A{int(self)}"


ACTION_COSTS = {
    Action.KEEP: 0.0,
    Action.HEAD: 0.5,
    Action.ADAPTER: 1.0,
    Action.JOINT: 1.5,
    Action.RESET_JOINT: 2.5,
}
MAX_COST = max(ACTION_COSTS.values())
STRONG_REFRESH = frozenset({Action.JOINT, Action.RESET_JOINT})

# (adapter trainable, head trainable)
_SCOPE = {
    Action.HEAD: (False, True),
    Action.ADAPTER: (True, False),
    Action.JOINT: (True, True),
    Action.RESET_JOINT: (True, True),
}


class Detector:
    def __init__(self, encoder: DenseNet, adapter: Adapter, head: DenseNet):
        if encoder.out_dim != adapter.latent_dim or head.in_dim != adapter.latent_dim:
            raise ConfigError("encoder, adapter and head widths do not line up")
        if head.out_dim != 2:
            raise ConfigError("head must emit two logits")
        self.encoder = encoder
        self.adapter = adapter
        self.head = head
        self.adapter_init = adapter.copy()
        for p in self.adapter_init.params():
            p.setflags(write=False)

    @classmethod
    def build(cls, encoder: DenseNet, cfg: DetectorConfig, seed: int) -> "Detector":
        adapter = Adapter.build(encoder.out_dim, cfg.bottleneck, seed=seed_for(seed, "adapter"))
        head = DenseNet.build([encoder.out_dim, cfg.head_hidden, 2], seed=seed_for(seed, "head"))
        return cls(encoder, adapter, head)

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.forward(x)

    def logits_latent(self, z: np.ndarray) -> np.ndarray:
        return self.head.forward(self.adapter.forward(z))

    def predict_latent(self, z: np.ndarray):
        probs = softmax(self.logits_latent(z))
        return probs.argmax(axis=1), probs

    def predict(self, x: np.ndarray):
        """Labels and class probabilities for a scaled batch."""
        return self.predict_latent(self.encode(x))

    def copy(self) -> "Detector":
        # the encoder is frozen and shared, everything trainable is copied
        det = Detector.__new__(Detector)
        det.encoder = self.encoder
        det.adapter = self.adapter.copy()
        det.head = self.head.copy()
        det.adapter_init = self.adapter_init
        return det

    def load_from(self, other: "Detector") -> None:
        self.adapter.load_from(other.adapter)
        for dst, src in zip(self.head.params(), other.head.params()):
            dst[...] = src

    def digests(self) -> dict[str, str]:
        return {
            "encoder": self.encoder.digest(),
            "adapter": self.adapter.digest(),
            "head": self.head.digest(),
        }

    def save(self, path) -> None:
        state = {}
        for prefix, mod in (("encoder", self.encoder), ("adapter", self.adapter),
                            ("head", self.head), ("adapter_init", self.adapter_init)):
            for k, v in mod.state_dict().items():
                state[f"{prefix}/{k}"] = v
        save_state(path, state)

    @classmethod
    def load(cls, path) -> "Detector":
        with np.load(Path(path), allow_pickle=False) as data:
            def sub(prefix):
                return {k.split("/", 1)[1]: data[k] for k in data.files if k.startswith(prefix + "/")}
            det = cls(DenseNet.from_state_dict(sub("encoder")).freeze(),
                      Adapter.from_state_dict(sub("adapter")),
                      DenseNet.from_state_dict(sub("head")))
            init = Adapter.from_state_dict(sub("adapter_init"))
        for p in init.params():
            p.setflags(write=False)
        det.adapter_init = init
        return det


def epochs_for(action: Action, cfg: UpdateConfig) -> int:
    return {
        Action.KEEP: 0,
        Action.HEAD: cfg.epochs.head,
        Action.ADAPTER: cfg.epochs.adapter,
        Action.JOINT: cfg.epochs.joint,
        Action.RESET_JOINT: cfg.epochs.joint,
    }[action]


def fit_latent(det: Detector, z: np.ndarray, y: np.ndarray, train_adapter: bool,
               train_head: bool, epochs: int, cfg: UpdateConfig,
               rng: np.random.Generator) -> list[float]:
    """Minibatch cross-entropy training of adapter and/or head on latents.

    A fresh optimizer is used for each call. Returns per-epoch mean loss.
    """
    modules = [det.adapter, det.head]
    trainable = (train_adapter, train_head)
    opt = Adam(trainable_params(modules, trainable), lr=cfg.lr)
    n = z.shape[0]
    curve = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            total += backward_and_step(modules, z[idx], y[idx], opt, trainable) * len(idx)
        curve.append(total / n)
    return curve


def apply_action(det: Detector, action: Action | int, x_train: np.ndarray | None,
                 y_train: np.ndarray, cfg: UpdateConfig, seed: int, budget: int | None = None,
                 z_train: np.ndarray | None = None) -> float | None:
    """Run one maintenance operator in place; returns its mean training loss.

    ``z_train`` (precomputed latents) skips the encoder pass. A0 returns
    None, as does any action on an empty training split.
    """
    action = Action(action)
    if action == Action.KEEP:
        return None
    y_train = np.asarray(y_train, dtype=np.int64)
    if budget is not None and y_train.shape[0] > budget:
        raise ConfigError(f"training split of {y_train.shape[0]} exceeds budget {budget}")
    if y_train.shape[0] == 0:
        log.warning("empty training split, %s treated as A0", action.label)
        return None
    z = det.encode(x_train) if z_train is None else np.asarray(z_train, dtype=np.float64)
    if action == Action.RESET_JOINT:
        det.adapter.load_from(det.adapter_init)
    epochs = epochs_for(action, cfg)
    train_adapter, train_head = _SCOPE[action]
    curve = fit_latent(det, z, y_train, train_adapter, train_head, epochs, cfg,
                       rng_for(seed, "update"))
    return float(np.mean(curve)) if curve else None


def warm_start(det: Detector, x_train: np.ndarray | None, y_train: np.ndarray,
               cfg: UpdateConfig, seed: int, z_train: np.ndarray | None = None) -> list[float]:
    """Joint adapter + head training on the last init window.

    Returns the loss before training followed by each epoch's mean loss.
    """
    y_train = np.asarray(y_train, dtype=np.int64)
    z = det.encode(x_train) if z_train is None else np.asarray(z_train, dtype=np.float64)
    initial, _ = cross_entropy(det.logits_latent(z), y_train)
    curve = fit_latent(det, z, y_train, True, True, cfg.epochs.warm_start, cfg,
                       rng_for(seed, "warm-start"))
    return [initial] + curve
