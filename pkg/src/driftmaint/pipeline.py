"""Stage 1 -> 2 -> 3 orchestration for one or more seeds and policies."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from .baselines import BASELINE_KINDS, BaselinePolicy, calibrate_drift_threshold, run_policy
from .config import ExperimentConfig
from .data import ChronologicalStream, ScalerParams, fit_scaler, generate_synthetic, ingest_csv
from .drift import write_drift_csv
from .env import MaintenanceEnv
from .errors import ConfigError
from .nn import DenseNet
from .ppo import greedy_rollout, train_controller
from .protocol import DeploymentProtocol, prepare_protocol
from .report import RunSummary, aggregate, summarize_run, write_aggregate, write_run_artifacts
from .seeding import seed_for
from .ssl import pretrain_encoder

log = logging.getLogger(__name__)

POLICY_NAMES = ("rl",) + BASELINE_KINDS


def expand_policies(names: Iterable[str]) -> list[str]:
    out: list[str] = []
    for name in names:
        chosen = POLICY_NAMES if name == "all" else (name,)
        for n in chosen:
            if n not in POLICY_NAMES:
                raise ConfigError(f"policies.names: unknown policy {n!r} (choose from {', '.join(POLICY_NAMES)}, all)")
            if n not in out:
                out.append(n)
    return out


def load_stream(config: ExperimentConfig, seed: int) -> ChronologicalStream:
    d = config.data
    if d.source == "csv":
        return ingest_csv(d.csv_path, d.init_windows)
    return generate_synthetic(d.synthetic, seed=seed, K=d.init_windows)


def seed_dir(out_dir, seed: int) -> Path:
    return Path(out_dir) / f"seed_{seed}"


# ---------------------------------------------------------------- stage 1


def pretrain_stage(config: ExperimentConfig, seed: int, out_dir=None):
    """Fit the scaler and pretrain the encoder, optionally checkpointing both."""
    stream = load_stream(config, seed)
    scaler = fit_scaler(stream)
    encoder, curve = pretrain_encoder(stream, scaler, config.ssl, config.detector, seed)
    if out_dir is not None:
        sd = seed_dir(out_dir, seed)
        sd.mkdir(parents=True, exist_ok=True)
        scaler.save(sd / "scaler.npz")
        encoder.save(sd / "encoder.npz")
        with open(sd / "ssl_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            w.writerows((i + 1, repr(v)) for i, v in enumerate(curve))
        (sd / "stage1.json").write_text(json.dumps(
            {"config_hash": config.digest(), "seed": seed, "encoder": encoder.digest(),
             "scaler": scaler.digest()}, indent=2, sort_keys=True) + "\n")
    return stream, scaler, encoder, curve


def load_stage1(config: ExperimentConfig, seed: int, out_dir):
    """Reuse a checkpointed scaler/encoder when it was made with the same config."""
    sd = seed_dir(out_dir, seed)
    meta = sd / "stage1.json"
    if not meta.exists():
        return None
    info = json.loads(meta.read_text())
    if info.get("config_hash") != config.digest():
        log.info("seed %d: stage-1 checkpoint has a different config, retraining", seed)
        return None
    return ScalerParams.load(sd / "scaler.npz"), DenseNet.load(sd / "encoder.npz").freeze()


def build_protocol(config: ExperimentConfig, seed: int, out_dir=None) -> DeploymentProtocol:
    stream = load_stream(config, seed)
    cached = load_stage1(config, seed, out_dir) if out_dir is not None else None
    if cached is None:
        return prepare_protocol(stream, config, seed)
    scaler, encoder = cached
    return prepare_protocol(stream, config, seed, encoder=encoder, scaler=scaler)


# ---------------------------------------------------------------- stage 3


def make_baseline(kind: str, config: ExperimentConfig, protocol: DeploymentProtocol) -> BaselinePolicy:
    pc = config.policies
    tau = 0.0
    if kind == "drift_rule":
        tau = pc.drift_tau
        if tau is None:
            tau = calibrate_drift_threshold(protocol.z_init, config.drift.subsample,
                                            protocol.seed, pc.drift_tau_quantile)
    return BaselinePolicy(kind, k=pc.periodic_k, tau=tau, tau_overrides=dict(pc.drift_tau_overrides))


def run_rl(protocol: DeploymentProtocol, config: ExperimentConfig):
    env = MaintenanceEnv(protocol)
    ppo_seed = seed_for(protocol.seed, "ppo", config.ppo.seed)
    nets, curve = train_controller(env, config.ppo, seed=ppo_seed)
    rows = greedy_rollout(nets, env)
    return rows, nets, curve


def run_one(protocol: DeploymentProtocol, policy: str, config: ExperimentConfig,
            out_dir=None) -> RunSummary:
    notes: dict = {}
    nets = curve = None
    if policy == "rl":
        rows, nets, curve = run_rl(protocol, config)
        notes["reported_pass"] = "greedy rollout after PPO training on replayed episodes"
        notes["ppo_seed"] = seed_for(protocol.seed, "ppo", config.ppo.seed)
    else:
        baseline = make_baseline(policy, config, protocol)
        rows = run_policy(MaintenanceEnv(protocol), baseline)
        if policy == "drift_rule":
            notes["drift_tau"] = baseline.tau
        if policy == "periodic_joint":
            notes["periodic_k"] = baseline.k
    missing = [t for t, sp in protocol.splits.items() if sp.missing_classes]
    if missing:
        notes["windows_missing_class"] = missing
    summary = summarize_run(
        rows, policy=policy, seed=protocol.seed, config_hash=config.digest(),
        expected_windows=protocol.deployment_steps, artifact_hashes=protocol.hashes(),
        notes=notes, config=config.model_dump(mode="json"),
    )
    if out_dir is not None:
        pdir = write_run_artifacts(rows, summary, seed_dir(out_dir, protocol.seed) / policy)
        if nets is not None:
            nets.save(pdir / "policy.npz")
            write_training_curve(curve, pdir / "training_curve.csv")
    return summary


def write_training_curve(curve: Sequence[dict], path) -> None:
    keys = list(curve[0]) if curve else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for c in curve:
            w.writerow([repr(c[k]) if isinstance(c[k], float) else c[k] for k in keys])


def run_seed(config: ExperimentConfig, seed: int, policies: Sequence[str], out_dir=None):
    protocol = build_protocol(config, seed, out_dir)
    if out_dir is not None:
        sd = seed_dir(out_dir, seed)
        sd.mkdir(parents=True, exist_ok=True)
        write_drift_csv([protocol.drift[t] for t in protocol.deployment_steps], sd / "drift.csv")
        (sd / "protocol.json").write_text(json.dumps(
            {"seed": seed, "config_hash": config.digest(), "hashes": protocol.hashes()},
            indent=2, sort_keys=True) + "\n")
    summaries = []
    for policy in policies:
        log.info("seed %d: running %s", seed, policy)
        summaries.append(run_one(protocol, policy, config, out_dir))
    return protocol, summaries


def run_experiment(config: ExperimentConfig, out_dir=None, seeds: Sequence[int] | None = None,
                   policies: Sequence[str] | None = None) -> list[dict]:
    """All seeds x policies under one shared protocol per seed; returns the aggregate table."""
    out_dir = Path(config.output_dir if out_dir is None else out_dir)
    seeds = list(config.seeds if seeds is None else seeds)
    names = expand_policies(config.policies.names if policies is None else policies)
    summaries = []
    for seed in seeds:
        _, s = run_seed(config, seed, names, out_dir)
        summaries.extend(s)
    table = aggregate(summaries)
    write_aggregate(table, out_dir / "aggregate.csv")
    return table
