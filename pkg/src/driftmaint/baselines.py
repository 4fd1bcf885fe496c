"""Fixed maintenance rules run through the same environment as the controller."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import Action
from .drift import drift_pair
from .env import MaintState
from .seeding import rng_for

DRIFT_FIELDS = ("ks_prev", "wd_prev", "ks_init", "wd_init")

BASELINE_KINDS = ("frozen_init", "head_tune", "adapter_tune", "joint_tune",
                  "periodic_joint", "drift_rule")

_FIXED = {
    "frozen_init": Action.KEEP,
    "head_tune": Action.HEAD,
    "adapter_tune": Action.ADAPTER,
    "joint_tune": Action.JOINT,
}


@dataclass(frozen=True)
class BaselinePolicy:
    kind: str
    k: int = 2
    tau: float = 0.0
    tau_overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.k < 1:
            raise ValueError("periodic k must be >= 1")
        unknown = set(self.tau_overrides) - set(DRIFT_FIELDS)
        if unknown:
            raise ValueError(f"unknown drift indicators {sorted(unknown)}")

    @property
    def name(self) -> str:
        if self.kind == "periodic_joint":
            return f"periodic_joint_{self.k}"
        return self.kind

    def threshold(self, indicator: str) -> float:
        return self.tau_overrides.get(indicator, self.tau)

    def select_action(self, state: MaintState, step: int) -> Action:
        """``step`` is the 1-based deployment step."""
        if self.kind in _FIXED:
            return _FIXED[self.kind]
        if self.kind == "periodic_joint":
            return Action.JOINT if (step - 1) % self.k == 0 else Action.KEEP
        fired = any(getattr(state, f) > self.threshold(f) for f in DRIFT_FIELDS)
        return Action.JOINT if fired else Action.HEAD


def calibrate_drift_threshold(z_init: np.ndarray, subsample: int, seed: int,
                              quantile: float = 0.95, draws: int = 20) -> float:
    """Null drift level from random disjoint halves of the init latent pool.

    Each draw compares two disjoint subsamples of the (stationary by
    construction) reference pool; the threshold is the requested quantile of
    the largest of the KS and W1 values over all draws.
    """
    rng = rng_for(seed, "drift-threshold")
    n = z_init.shape[0]
    size = min(subsample, n // 2)
    null = []
    for _ in range(draws):
        perm = rng.permutation(n)
        ks, wd = drift_pair(z_init[perm[:size]], z_init[perm[size:2 * size]])
        null.append(max(ks, wd))
    return float(np.quantile(null, quantile))


def run_policy(env, policy: BaselinePolicy) -> list[dict]:
    state = env.reset()
    step, done = 1, False
    while not done:
        state, _, done, _ = env.step(policy.select_action(state, step))
        step += 1
    return list(env.rows)
