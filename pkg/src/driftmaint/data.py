"""Chronological windows, the causal scaler, per-window splits and the memory set."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SyntheticConfig
from .errors import ConfigError, IngestionError
from .seeding import rng_for

log = logging.getLogger(__name__)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(f"{a.dtype}{a.shape}".encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class Window:
    index: int
    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64, 0 benign / 1 malware

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ConfigError(f"window {self.index}: x{x.shape} / y{y.shape} mismatch")
        if not np.all(np.isfinite(x)):
            raise ConfigError(f"window {self.index}: non-finite features")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ConfigError(f"window {self.index}: labels must be 0 or 1")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int((self.y == 0).sum()), int((self.y == 1).sum())


@dataclass(frozen=True)
class ChronologicalStream:
    windows: tuple[Window, ...]
    K: int

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if not 1 <= self.K < len(self.windows):
            raise ConfigError(f"need 1 <= K < T, got K={self.K}, T={len(self.windows)}")
        idx = [w.index for w in self.windows]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigError("window indices must be strictly increasing")
        if len({w.d for w in self.windows}) != 1:
            raise ConfigError("all windows must share the feature width")

    @property
    def T(self) -> int:
        return len(self.windows)

    @property
    def d(self) -> int:
        return self.windows[0].d

    def init_windows(self) -> tuple[Window, ...]:
        return self.windows[: self.K]

    def deployment_windows(self) -> tuple[Window, ...]:
        return self.windows[self.K:]

    def truncated(self, n_windows: int) -> "ChronologicalStream":
        return ChronologicalStream(self.windows[:n_windows], self.K)

    def digest(self) -> str:
        return array_digest(*(a for w in self.windows for a in (w.x, w.y)))


# ------------------------------------------------------------ ingestion


def ingest_csv(path, K: int, window_col: str = "window", label_col: str = "label",
               feature_prefix: str = "f") -> ChronologicalStream:
    """Read ``window,label,f0..f{d-1}`` rows into a stream.

    Rows with an empty or unparsable cell are dropped. A label outside {0, 1}
    or a row with the wrong number of cells raises :class:`IngestionError`
    naming the (1-based, header = row 1) row number.
    """
    path = Path(path)
    pattern = re.compile(rf"^{re.escape(feature_prefix)}(\d+)$")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if window_col not in header or label_col not in header:
            raise IngestionError(f"{path}: header must contain {window_col!r} and {label_col!r}")
        feats = sorted(
            ((int(m.group(1)), i) for i, h in enumerate(header) if (m := pattern.match(h))),
        )
        if not feats:
            raise IngestionError(f"{path}: no feature columns named {feature_prefix}<j>")
        if [j for j, _ in feats] != list(range(len(feats))):
            raise IngestionError(f"{path}: feature columns must be {feature_prefix}0..{feature_prefix}{len(feats) - 1}")
        w_i, y_i = header.index(window_col), header.index(label_col)
        f_idx = [i for _, i in feats]
        groups: dict[int, tuple[list, list]] = {}
        dropped = 0
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}")
            label_s = row[y_i].strip()
            if label_s == "":
                dropped += 1
                continue
            try:
                label_f = float(label_s)
            except ValueError:
                raise IngestionError(f"{path}: row {rowno} has unknown label {label_s!r}") from None
            if label_f not in (0.0, 1.0):
                raise IngestionError(f"{path}: row {rowno} has unknown label {label_s!r}")
            try:
                t = int(row[w_i].strip())
                x = [float(row[i]) for i in f_idx]
            except ValueError:
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in x):
                dropped += 1
                continue
            xs, ys = groups.setdefault(t, ([], []))
            xs.append(x)
            ys.append(int(label_f))
    if dropped:
        log.warning("%s: dropped %d rows with missing or unparsable values", path, dropped)
    if not groups:
        raise IngestionError(f"{path}: no usable rows")
    d = len(f_idx)
    windows = [
        Window(t, np.asarray(xs, dtype=np.float64).reshape(-1, d), np.asarray(ys))
        for t, (xs, ys) in sorted(groups.items())
    ]
    return ChronologicalStream(tuple(windows), K)


def write_csv(stream: ChronologicalStream, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "label"] + [f"f{j}" for j in range(stream.d)])
        for win in stream.windows:
            for x, y in zip(win.x, win.y):
                w.writerow([win.index, int(y)] + [repr(float(v)) for v in x])


# ------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SyntheticTruth:
    """Generator internals, kept for tests: class means and per-window offsets."""

    means: np.ndarray  # (T, 2, d) class means per window
    jump: np.ndarray  # (d,) displacement applied at each abrupt window


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0, K: int = 3,
                       return_truth: bool = False):
    """Two Gaussian classes; the malware mean drifts while benign stays put.

    The classes start ``separation`` noise-sigmas apart along a random unit
    axis ``u``. Every window the malware mean moves ``drift_velocity`` sigmas
    along ``(w - u) / sqrt(2)`` (``w`` a random unit vector orthogonal to
    ``u``), sliding towards the benign side of the original boundary, while a
    boundary along ``u + w`` keeps separating benign from every malware
    version. At each window in ``abrupt_windows`` both means jump
    ``abrupt_magnitude`` sigmas along a third random unit direction and stay
    there.
    """
    if cfg.n_features < 2 or cfg.n_windows < 2 or cfg.samples_per_window < 2:
        raise ConfigError("synthetic stream needs positive feature, window and sample counts")
    if cfg.seed is not None:
        seed = cfg.seed
    rng = rng_for(seed, "synthetic")
    d, T = cfg.n_features, cfg.n_windows
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    w = rng.normal(size=d)
    w -= (w @ u) * u
    w /= np.linalg.norm(w)
    jump = rng.normal(size=d)
    jump /= np.linalg.norm(jump)
    drift_dir = (w - u) / np.sqrt(2.0)

    sigma = cfg.noise
    base = np.stack([-0.5 * cfg.separation * u, 0.5 * cfg.separation * u]) * sigma
    abrupt = set(cfg.abrupt_windows)
    means = np.zeros((T, 2, d))
    level = np.zeros(d)
    for t in range(1, T + 1):
        if t in abrupt:
            level = level + cfg.abrupt_magnitude * sigma * jump
        step = cfg.drift_velocity * sigma * (t - 1) * drift_dir
        means[t - 1, 0] = base[0] + level
        means[t - 1, 1] = base[1] + step + level

    n = cfg.samples_per_window
    n1 = int(round(cfg.malware_fraction * n))
    windows = []
    for t in range(1, T + 1):
        wrng = rng_for(seed, "synthetic-window", t)
        y = np.zeros(n, dtype=np.int64)
        y[:n1] = 1
        wrng.shuffle(y)
        x = means[t - 1][y] + sigma * wrng.normal(size=(n, d))
        windows.append(Window(t, x, y))
    stream = ChronologicalStream(tuple(windows), K)
    if return_truth:
        return stream, SyntheticTruth(means, cfg.abrupt_magnitude * sigma * jump)
    return stream


# ------------------------------------------------------------ scaling


@dataclass(frozen=True)
class ScalerParams:
    mu: np.ndarray
    sigma: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mu.shape[0]:
            raise ConfigError(f"scaler expects width {self.mu.shape[0]}, got {x.shape[-1]}")
        return (x - self.mu) / self.sigma

    def digest(self) -> str:
        return array_digest(self.mu, self.sigma)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, mu=self.mu, sigma=self.sigma)

    @classmethod
    def load(cls, path) -> "ScalerParams":
        with np.load(path, allow_pickle=False) as data:
            return cls(_readonly(data["mu"]), _readonly(data["sigma"]))


def fit_scaler(stream: ChronologicalStream, K: int | None = None) -> ScalerParams:
    """Per-feature z-score statistics of the first ``K`` windows only."""
    K = stream.K if K is None else K
    if K < 1:
        raise ConfigError("K must be >= 1")
    pool = [w.x for w in stream.windows[:K] if w.n]
    if not pool:
        raise ConfigError("initialization period is empty")
    x = np.concatenate(pool)
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma = np.where(sigma > 0, sigma, 1.0)
    return ScalerParams(_readonly(mu), _readonly(sigma))


# ------------------------------------------------------------ splits


def apportion(available: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``available`` (ties: lower index)."""
    available = np.asarray(available, dtype=np.int64)
    n = int(available.sum())
    total = min(int(total), n)
    if n == 0:
        return np.zeros_like(available)
    quota = available * total / n
    out = np.floor(quota).astype(np.int64)
    rem = quota - out
    order = sorted(range(len(available)), key=lambda i: (-rem[i], i))
    for i in order[: total - int(out.sum())]:
        out[i] += 1
    return np.minimum(out, available)


@dataclass(frozen=True)
class WindowSplit:
    """Disjoint adaptation / evaluation subsets of one window (row indices into it)."""

    window_index: int
    train_idx: np.ndarray
    eval_idx: np.ndarray
    missing_classes: tuple[int, ...] = ()

    def train(self, w: Window, scaler: ScalerParams | None = None):
        x = w.x[self.train_idx]
        return (scaler.transform(x) if scaler else x), w.y[self.train_idx]

    def eval(self, w: Window, scaler: ScalerParams | None = None):
        x = w.x[self.eval_idx]
        return (scaler.transform(x) if scaler else x), w.y[self.eval_idx]

    def digest(self) -> str:
        return array_digest(self.train_idx, self.eval_idx)


def split_window(w: Window, train_budget: int, eval_budget: int, seed: int) -> WindowSplit:
    """Stratified 50/50 split, then stratified subsampling of each side to its budget."""
    if w.n == 0:
        raise ConfigError(f"window {w.index} is empty")
    rng = rng_for(seed, "split", w.index)
    by_class = [rng.permutation(np.flatnonzero(w.y == c)) for c in (0, 1)]
    counts = np.array([len(ix) for ix in by_class])
    missing = tuple(c for c in (0, 1) if counts[c] == 0)
    if missing:
        log.warning("window %d has no samples of class %s", w.index, missing)
    n_train = apportion(counts, w.n // 2)
    tr_parts = [ix[:k] for ix, k in zip(by_class, n_train)]
    ev_parts = [ix[k:] for ix, k in zip(by_class, n_train)]

    def _budget(parts, budget):
        keep = apportion(np.array([len(p) for p in parts]), budget)
        return np.sort(np.concatenate([p[:k] for p, k in zip(parts, keep)]))

    return WindowSplit(
        w.index,
        _readonly(_budget(tr_parts, train_budget)),
        _readonly(_budget(ev_parts, eval_budget)),
        missing,
    )


# ------------------------------------------------------------ memory set


@dataclass(frozen=True)
class MemorySet:
    x: np.ndarray  # scaled features
    y: np.ndarray
    source: np.ndarray = field(repr=False)  # (window index, row) pairs

    def __len__(self) -> int:
        return self.y.shape[0]

    def digest(self) -> str:
        return array_digest(self.x, self.y)


def build_memory_set(stream: ChronologicalStream, scaler: ScalerParams, budget: int,
                     seed: int, K: int | None = None) -> MemorySet:
    """Class-balanced sample of the initialization period (``budget // 2`` per class, capped)."""
    K = stream.K if K is None else K
    wins = stream.windows[:K]
    src = np.concatenate([np.stack([np.full(w.n, w.index), np.arange(w.n)], axis=1) for w in wins])
    x = np.concatenate([w.x for w in wins])
    y = np.concatenate([w.y for w in wins])
    rng = rng_for(seed, "memory")
    per_class = budget // 2
    picks = []
    for c in (0, 1):
        pool = np.flatnonzero(y == c)
        if pool.size == 0:
            raise ConfigError(f"class {c} absent from the initialization period")
        if pool.size < per_class:
            log.warning("memory set: only %d samples of class %d available (wanted %d)",
                        pool.size, c, per_class)
        picks.append(rng.choice(pool, size=min(per_class, pool.size), replace=False))
    idx = np.sort(np.concatenate(picks))
    return MemorySet(_readonly(scaler.transform(x[idx])), _readonly(y[idx]), _readonly(src[idx]))
