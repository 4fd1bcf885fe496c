import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from driftmaint.config import ExperimentConfig, parse_config  # noqa: E402
from driftmaint.data import generate_synthetic  # noqa: E402
from driftmaint.protocol import prepare_protocol  # noqa: E402

SMALL = {
    "data": {"init_windows": 3, "synthetic": {
        "n_features": 12, "n_windows": 6, "samples_per_window": 400,
        "drift_velocity": 0.5, "separation": 4.0}},
    "budgets": {"train": 150, "eval": 150, "memory": 200},
    "ssl": {"epochs": 3, "batch_size": 64},
    "drift": {"subsample": 150},
    "detector": {"latent_dim": 8, "encoder_hidden": [32, 16], "bottleneck": 4, "head_hidden": 8},
    "ppo": {"n_steps": 16, "batch_size": 8, "ppo_epochs": 2, "total_env_steps": 32,
            "hidden": [16, 16]},
    "seeds": [0],
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def small_config(**overrides) -> ExperimentConfig:
    """The small test config with nested ``overrides`` merged in."""
    return parse_config(_merge(SMALL, overrides))


@pytest.fixture(scope="session")
def small_cfg() -> ExperimentConfig:
    return small_config()


@pytest.fixture(scope="session")
def small_stream(small_cfg):
    return generate_synthetic(small_cfg.data.synthetic, seed=0, K=small_cfg.data.init_windows)


@pytest.fixture(scope="session")
def small_protocol(small_cfg, small_stream):
    return prepare_protocol(small_stream, small_cfg, seed=0)
