from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts, class 1 (malware) positive."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        if y_true.shape != y_pred.shape:
            raise ConfigError("label and prediction arrays differ in shape")
        return cls(
            tp=int((y_true & y_pred).sum()),
            fp=int((~y_true & y_pred).sum()),
            tn=int((~y_true & ~y_pred).sum()),
            fn=int((y_true & ~y_pred).sum()),
        )


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean per-class recall over the classes present in the ground truth."""
    if c.total == 0:
        raise ConfigError("balanced accuracy of an empty set")
    recalls = []
    if c.tp + c.fn:
        recalls.append(c.tp / (c.tp + c.fn))
    if c.tn + c.fp:
        recalls.append(c.tn / (c.tn + c.fp))
    return sum(recalls) / len(recalls)


def macro_f1(c: ConfusionCounts) -> float:
    """Unweighted mean of per-class F1 over present classes (0 when undefined)."""
    if c.total == 0:
        raise ConfigError("macro-F1 of an empty set")

    def f1(tp, fp, fn):
        denom = 2 * tp + fp + fn
        return 2 * tp / denom if denom else 0.0

    scores = []
    if c.tp + c.fn:
        scores.append(f1(c.tp, c.fp, c.fn))
    if c.tn + c.fp:
        scores.append(f1(c.tn, c.fn, c.fp))
    return sum(scores) / len(scores)


def aut(series: Sequence[float], n: int | None = None) -> float:
    """Area Under Time: trapezoidal average of a per-window metric series."""
    f = [float(v) for v in series]
    n = len(f) if n is None else n
    if n != len(f):
        raise ConfigError(f"series has {len(f)} points, expected {n}")
    if n < 2:
        raise ConfigError("AUT needs at least two windows")
    return sum((f[k] + f[k + 1]) / 2.0 for k in range(n - 1)) / (n - 1)
