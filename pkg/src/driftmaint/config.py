"""Experiment configuration.

All settings live in one YAML (or JSON) file; every section is optional and
falls back to the defaults below. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticConfig(_Section):
    n_features: int = Field(100, ge=1)
    n_windows: int = Field(13, ge=2)
    samples_per_window: int = Field(5000, ge=2)
    malware_fraction: float = Field(0.5, gt=0, lt=1)
    separation: float = Field(4.0, ge=0)
    noise: float = Field(1.0, gt=0)
    drift_velocity: float = Field(0.5, ge=0)
    abrupt_windows: tuple[int, ...] = ()
    abrupt_magnitude: float = 5.0
    seed: Optional[int] = None  # None: use the run seed


class DataConfig(_Section):
    source: Literal["synthetic", "csv"] = "synthetic"
    csv_path: Optional[str] = None
    init_windows: int = Field(3, ge=1)
    synthetic: SyntheticConfig = SyntheticConfig()

    @model_validator(mode="after")
    def _check(self):
        if self.source == "csv" and not self.csv_path:
            raise ValueError("csv_path is required when source is 'csv'")
        if self.source == "synthetic" and self.init_windows >= self.synthetic.n_windows:
            raise ValueError("init_windows must be smaller than synthetic.n_windows")
        return self


class BudgetConfig(_Section):
    train: int = Field(2000, ge=1)
    eval: int = Field(2000, ge=1)
    memory: int = Field(2000, ge=2)


class MaskingConfig(_Section):
    p: float = Field(0.3, gt=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(1e-3, ge=0)


class DriftConfig(_Section):
    subsample: int = Field(2000, ge=1)


class DetectorConfig(_Section):
    latent_dim: int = Field(64, ge=2)
    encoder_hidden: tuple[int, ...] = (256, 128)
    bottleneck: int = Field(16, ge=1)
    head_hidden: int = Field(32, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.bottleneck >= self.latent_dim:
            raise ValueError("bottleneck must be smaller than latent_dim")
        return self


class EpochsConfig(_Section):
    head: int = Field(2, ge=0)
    adapter: int = Field(3, ge=0)
    joint: int = Field(3, ge=0)
    warm_start: int = Field(4, ge=0)


class UpdateConfig(_Section):
    lr: float = Field(1e-3, ge=0)
    batch_size: int = Field(128, ge=1)
    epochs: EpochsConfig = EpochsConfig()


class RewardConfig(_Section):
    alpha: float = Field(0.5, ge=0, le=1)
    beta: float = Field(0.5, ge=0, le=1)
    lambda_c: float = Field(0.02, ge=0)
    eta1: float = 1.0
    eta2: float = 0.5


class PPOConfig(_Section):
    n_steps: int = Field(64, ge=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(3e-4, ge=0)
    gamma: float = Field(0.95, gt=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    ent_coef: float = Field(0.01, ge=0)
    clip_eps: float = Field(0.2, gt=0)
    ppo_epochs: int = Field(10, ge=1)
    value_coef: float = Field(0.5, ge=0)
    max_grad_norm: Optional[float] = Field(0.5, gt=0)
    total_env_steps: int = Field(4096, ge=1)
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.batch_size > self.n_steps:
            raise ValueError("batch_size must not exceed n_steps")
        return self


class PolicyConfig(_Section):
    names: tuple[str, ...] = ("all",)
    periodic_k: int = Field(2, ge=1)
    drift_tau: Optional[float] = Field(None, ge=0)  # None: calibrate on init data
    drift_tau_overrides: dict[str, float] = {}
    drift_tau_quantile: float = Field(0.95, gt=0, lt=1)


class ExperimentConfig(_Section):
    data: DataConfig = DataConfig()
    budgets: BudgetConfig = BudgetConfig()
    ssl: MaskingConfig = MaskingConfig()
    drift: DriftConfig = DriftConfig()
    detector: DetectorConfig = DetectorConfig()
    update: UpdateConfig = UpdateConfig()
    reward: RewardConfig = RewardConfig()
    ppo: PPOConfig = PPOConfig()
    policies: PolicyConfig = PolicyConfig()
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    output_dir: str = "runs"

    def digest(self) -> str:
        """Hash of every setting except the seed list and output location."""
        echo = self.model_dump(mode="json", exclude={"seeds", "output_dir"})
        blob = json.dumps(echo, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(raw: dict | None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw or {})
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw)
