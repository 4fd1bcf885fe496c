"""Command-line driver: ``driftmaint {pretrain,drift,run,aggregate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .drift import write_drift_csv
from .errors import ConfigError, IngestionError
from .pipeline import (build_protocol, expand_policies, pretrain_stage, run_experiment,
                       seed_dir)
from .report import aggregate, load_summaries, write_aggregate

log = logging.getLogger("driftmaint")


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _seeds(args, config):
    return [args.seed] if args.seed is not None else list(config.seeds)


def _out(args, config) -> Path:
    return Path(args.out or config.output_dir)


def cmd_pretrain(args) -> int:
    config = _config(args)
    out = _out(args, config)
    for seed in _seeds(args, config):
        _, _, encoder, curve = pretrain_stage(config, seed, out)
        last = f"{curve[-1]:.5f}" if curve else "n/a"
        print(f"seed {seed}: encoder {encoder.digest()[:12]} final ssl loss {last} -> {seed_dir(out, seed)}")
    return 0


def cmd_drift(args) -> int:
    config = _config(args)
    out = _out(args, config)
    for seed in _seeds(args, config):
        protocol = build_protocol(config, seed, out)
        path = seed_dir(out, seed) / "drift.csv"
        write_drift_csv([protocol.drift[t] for t in protocol.deployment_steps], path)
        print(f"seed {seed}: {len(protocol.drift)} drift reports -> {path}")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    out = _out(args, config)
    policies = expand_policies(args.policy or config.policies.names)
    table = run_experiment(config, out, seeds=_seeds(args, config), policies=policies)
    _print_table(table)
    print(f"aggregate -> {out / 'aggregate.csv'}")
    return 0


def cmd_aggregate(args) -> int:
    rows = aggregate(load_summaries(args.dirs))
    out = Path(args.output)
    write_aggregate(rows, out)
    _print_table(rows)
    print(f"aggregate -> {out}")
    return 0


def _print_table(rows) -> None:
    print(f"{'policy':<18} {'seed':>5} {'acc':>7} {'f1':>7} {'mem':>7} {'cost':>8}")
    for r in rows:
        print(f"{r['policy']:<18} {str(r['seed']):>5} {r['aut_acc']:7.3f} {r['aut_f1']:7.3f} "
              f"{r['aut_mem']:7.3f} {r['total_cost']:8.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftmaint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", help="YAML/JSON experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="run a single seed instead of config.seeds")
        p.add_argument("--out", "-o", help="output directory (overrides config.output_dir)")

    p = sub.add_parser("pretrain", help="fit scaler and pretrain the encoder (stage 1)")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("drift", help="compute latent drift reports (stage 2)")
    common(p)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("run", help="run maintenance policies (stages 1-3) and aggregate")
    common(p)
    p.add_argument("--policy", "-p", action="append",
                   help="policy name (repeatable): rl, frozen_init, head_tune, adapter_tune, "
                        "joint_tune, periodic_joint, drift_rule, all")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="combine summary.json files into one table")
    p.add_argument("dirs", nargs="+", help="run directories or summary.json files")
    p.add_argument("--output", "-o", default="aggregate.csv")
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IngestionError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
