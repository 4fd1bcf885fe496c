"""Everything a seed's policies share: scaler, frozen encoder, memory set,
splits, latents, drift reports and the warm-started detector.

Building this once per seed and handing the same object to every policy is
what keeps the comparison fair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .data import (ChronologicalStream, MemorySet, ScalerParams, WindowSplit, array_digest,
                   build_memory_set, fit_scaler, split_window)
from .detector import Detector, warm_start
from .drift import DriftReport, window_drift
from .nn import DenseNet
from .seeding import rng_for
from .ssl import pretrain_encoder

log = logging.getLogger(__name__)


@dataclass
class SplitLatents:
    z_train: np.ndarray
    y_train: np.ndarray
    z_eval: np.ndarray
    y_eval: np.ndarray


@dataclass
class DeploymentProtocol:
    seed: int
    config: ExperimentConfig
    stream: ChronologicalStream
    scaler: ScalerParams
    encoder: DenseNet
    memory: MemorySet
    z_memory: np.ndarray
    splits: dict[int, WindowSplit]
    latents: dict[int, SplitLatents]
    drift: dict[int, DriftReport]
    z_init: np.ndarray = field(repr=False)
    warm: Detector = field(repr=False)
    ssl_curve: list[float] = field(default_factory=list)
    warm_curve: list[float] = field(default_factory=list)

    @property
    def deployment_steps(self) -> list[int]:
        return [w.index for w in self.stream.deployment_windows()]

    def hashes(self) -> dict[str, str]:
        return {
            "scaler": self.scaler.digest(),
            "encoder": self.encoder.digest(),
            "memory": self.memory.digest(),
            "splits": array_digest(*(a for t in sorted(self.splits)
                                     for a in (self.splits[t].train_idx, self.splits[t].eval_idx))),
            "drift": array_digest(np.array([[r.ks_prev, r.wd_prev, r.ks_init, r.wd_init]
                                            for _, r in sorted(self.drift.items())])),
            "warm_start": array_digest(*self.warm.adapter.params(), *self.warm.head.params()),
        }


def window_latents(encoder: DenseNet, scaler: ScalerParams, stream: ChronologicalStream):
    return {w.index: encoder.forward(scaler.transform(w.x)) for w in stream.windows}


def compute_drift_reports(stream: ChronologicalStream, latents: dict[int, np.ndarray],
                          subsample: int, seed: int):
    """Drift reports for every deployment window plus the init reference pool.

    The first deployment window is compared against window K.
    """
    z_init = np.concatenate([latents[w.index] for w in stream.init_windows()])
    reports = {}
    wins = stream.windows
    for i in range(stream.K, stream.T):
        t, prev = wins[i].index, wins[i - 1].index
        reports[t] = window_drift(latents[t], latents[prev], z_init, t, subsample,
                                  rng_for(seed, "drift", t))
    return reports, z_init


def prepare_protocol(stream: ChronologicalStream, config: ExperimentConfig, seed: int,
                     encoder: DenseNet | None = None,
                     scaler: ScalerParams | None = None) -> DeploymentProtocol:
    """Stages 1 and 2 plus the warm start; pass ``encoder``/``scaler`` to reuse a checkpoint."""
    b = config.budgets
    ssl_curve: list[float] = []
    if scaler is None:
        scaler = fit_scaler(stream)
    if encoder is None:
        log.info("seed %d: pretraining encoder on %d init windows", seed, stream.K)
        encoder, ssl_curve = pretrain_encoder(stream, scaler, config.ssl, config.detector, seed)
    elif not encoder.frozen:
        encoder.freeze()

    memory = build_memory_set(stream, scaler, b.memory, seed)
    z_memory = encoder.forward(memory.x)
    z_windows = window_latents(encoder, scaler, stream)
    drift, z_init = compute_drift_reports(stream, z_windows, config.drift.subsample, seed)

    splits, latents = {}, {}
    for w in stream.windows[stream.K - 1:]:
        sp = split_window(w, b.train, b.eval, seed)
        splits[w.index] = sp
        z = z_windows[w.index]
        latents[w.index] = SplitLatents(z[sp.train_idx], w.y[sp.train_idx],
                                        z[sp.eval_idx], w.y[sp.eval_idx])

    det = Detector.build(encoder, config.detector, seed)
    k_lat = latents[stream.windows[stream.K - 1].index]
    warm_curve = warm_start(det, None, k_lat.y_train, config.update, seed, z_train=k_lat.z_train)
    return DeploymentProtocol(
        seed=seed, config=config, stream=stream, scaler=scaler, encoder=encoder,
        memory=memory, z_memory=z_memory, splits=splits, latents=latents, drift=drift,
        z_init=z_init, warm=det, ssl_curve=ssl_curve, warm_curve=warm_curve,
    )
