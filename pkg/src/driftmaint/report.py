"""Run artifacts: runlog.csv, summary.json, series_long.csv and the cross-seed table."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .env import RUNLOG_COLUMNS
from .errors import ConfigError
from .metrics import aut

SERIES = {"acc": "b_post", "f1": "f1_post", "mem": "mem_post"}

AGGREGATE_COLUMNS = ("policy", "seed", "aut_acc", "aut_f1", "aut_mem", "total_cost", "config_hash")


@dataclass
class RunSummary:
    policy: str
    seed: int
    config_hash: str
    aut_acc: float
    aut_f1: float
    aut_mem: float
    total_cost: float
    n_windows: int
    windows: list[int]
    actions: list[str]
    series: dict[str, list[float]]
    artifact_hashes: dict[str, str] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        return cls(**json.loads(text))


def summarize_run(rows: Sequence[dict], policy: str, seed: int, config_hash: str,
                  expected_windows: Sequence[int] | None = None, artifact_hashes=None,
                  notes=None, config=None) -> RunSummary:
    windows = [int(r["t"]) for r in rows]
    if expected_windows is not None:
        missing = sorted(set(expected_windows) - set(windows))
        if missing or len(windows) != len(expected_windows):
            raise ConfigError(f"incomplete run log, missing windows {missing}")
    series = {name: [float(r[col]) for r in rows] for name, col in SERIES.items()}
    return RunSummary(
        policy=policy, seed=int(seed), config_hash=config_hash,
        aut_acc=aut(series["acc"]), aut_f1=aut(series["f1"]), aut_mem=aut(series["mem"]),
        total_cost=math.fsum(float(r["cost"]) for r in rows),
        n_windows=len(rows), windows=windows, actions=[r["action"] for r in rows],
        series=series, artifact_hashes=dict(artifact_hashes or {}),
        notes=dict(notes or {}), config=dict(config or {}),
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_runlog(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUNLOG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in RUNLOG_COLUMNS])


def read_runlog(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_series_long(summary: RunSummary, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "seed", "t", "metric", "value"])
        for metric, values in summary.series.items():
            for t, v in zip(summary.windows, values):
                w.writerow([summary.policy, summary.seed, t, metric, repr(v)])


def write_run_artifacts(rows, summary: RunSummary, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_runlog(rows, out_dir / "runlog.csv")
    (out_dir / "summary.json").write_text(summary.to_json() + "\n")
    write_series_long(summary, out_dir / "series_long.csv")
    return out_dir


def load_summaries(paths) -> list[RunSummary]:
    """Collect summary.json files from run directories (searched recursively)."""
    found = []
    for p in map(Path, paths):
        if p.is_file():
            found.append(p)
        elif p.is_dir():
            hits = sorted(p.rglob("summary.json"))
            if not hits:
                raise FileNotFoundError(f"no summary.json under {p}")
            found.extend(hits)
        else:
            raise FileNotFoundError(f"missing summary file: {p}")
    return [RunSummary.from_json(f.read_text()) for f in found]


def aggregate(summaries: Sequence[RunSummary]) -> list[dict]:
    """One row per (policy, seed) plus a ``mean`` row per policy."""
    if not summaries:
        raise ConfigError("nothing to aggregate")
    hashes = {s.config_hash for s in summaries}
    if len(hashes) > 1:
        raise ConfigError(f"refusing to aggregate runs with different configs: {sorted(hashes)}")
    by_policy: dict[str, list[RunSummary]] = {}
    for s in summaries:
        by_policy.setdefault(s.policy, []).append(s)
    rows = []
    for policy, runs in by_policy.items():
        runs = sorted(runs, key=lambda s: s.seed)
        for s in runs:
            rows.append({"policy": policy, "seed": s.seed, "aut_acc": s.aut_acc,
                         "aut_f1": s.aut_f1, "aut_mem": s.aut_mem,
                         "total_cost": s.total_cost, "config_hash": s.config_hash})
        n = len(runs)
        rows.append({
            "policy": policy, "seed": "mean",
            **{k: math.fsum(getattr(s, k) for s in runs) / n
               for k in ("aut_acc", "aut_f1", "aut_mem", "total_cost")},
            "config_hash": runs[0].config_hash,
        })
    return rows


def write_aggregate(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in AGGREGATE_COLUMNS])
