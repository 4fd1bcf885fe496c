"""Latent drift indicators: mean per-dimension KS and Wasserstein-1 distances."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DriftReport:
    t: int
    ks_prev: float
    wd_prev: float
    ks_init: float
    wd_init: float

    def indicators(self) -> dict[str, float]:
        return {"ks_prev": self.ks_prev, "wd_prev": self.wd_prev,
                "ks_init": self.ks_init, "wd_init": self.wd_init}


DRIFT_COLUMNS = tuple(f.name for f in fields(DriftReport))


def _as_1d(a, name):
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ConfigError(f"{name} is empty")
    return a


def ks_1d(a, b) -> float:
    """Two-sample KS statistic: exact sup of the ECDF gap over the pooled points.

    Computed as max |c_a*m - c_b*n| / (n*m) on integer counts so the value
    is the correctly rounded rational.
    """
    a = np.sort(_as_1d(a, "a"))
    b = np.sort(_as_1d(b, "b"))
    n, m = a.size, b.size
    pts = np.concatenate([a, b])
    ca = np.searchsorted(a, pts, side="right").astype(np.int64)
    cb = np.searchsorted(b, pts, side="right").astype(np.int64)
    return int(np.abs(ca * m - cb * n).max()) / (n * m)


def wd1_1d(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions.

    Equal sizes use sorted matching; otherwise the quantile functions are
    integrated on the common grid of steps 1/(n*m).
    """
    a = np.sort(_as_1d(a, "a"))
    b = np.sort(_as_1d(b, "b"))
    n, m = a.size, b.size
    if n == m:
        return float(np.abs(a - b).sum() / n)
    grid = np.union1d(np.arange(n + 1) * m, np.arange(m + 1) * n)
    left, width = grid[:-1], np.diff(grid)
    qa = a[left // m]
    qb = b[left // n]
    return float((np.abs(qa - qb) * width).sum() / (n * m))


def _subsample(z: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if size >= z.shape[0]:
        return z
    return z[np.sort(rng.choice(z.shape[0], size=size, replace=False))]


def drift_pair(za: np.ndarray, zb: np.ndarray, subsample: int | None = None,
               rng: np.random.Generator | None = None) -> tuple[float, float]:
    """(mean KS, mean W1) across latent dimensions, after optional subsampling."""
    za = np.asarray(za, dtype=np.float64)
    zb = np.asarray(zb, dtype=np.float64)
    if za.ndim != 2 or zb.ndim != 2 or za.shape[1] != zb.shape[1]:
        raise ConfigError(f"latent batches must share width: {za.shape} vs {zb.shape}")
    if subsample is not None:
        rng = rng if rng is not None else np.random.default_rng(0)
        za = _subsample(za, subsample, rng)
        zb = _subsample(zb, subsample, rng)
    d = za.shape[1]
    ks = [ks_1d(za[:, k], zb[:, k]) for k in range(d)]
    wd = [wd1_1d(za[:, k], zb[:, k]) for k in range(d)]
    return math.fsum(ks) / d, math.fsum(wd) / d


def window_drift(z_t: np.ndarray, z_prev: np.ndarray, z_init: np.ndarray, t: int,
                 subsample: int, rng: np.random.Generator) -> DriftReport:
    """Drift of window ``t`` against the previous window and the init reference pool."""
    ks_p, wd_p = drift_pair(z_t, z_prev, subsample, rng)
    ks_i, wd_i = drift_pair(z_t, z_init, subsample, rng)
    return DriftReport(t, ks_p, wd_p, ks_i, wd_i)


def write_drift_csv(reports, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DRIFT_COLUMNS)
        for r in reports:
            w.writerow([r.t] + [repr(v) for v in astuple(r)[1:]])


def read_drift_csv(path) -> list[DriftReport]:
    with open(path, newline="") as fh:
        return [
            DriftReport(int(row["t"]), *(float(row[c]) for c in DRIFT_COLUMNS[1:]))
            for row in csv.DictReader(fh)
        ]
