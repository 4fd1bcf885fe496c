"""Deployment-window MDP: state construction, reward, and the step loop."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .config import RewardConfig, UpdateConfig
from .detector import MAX_COST, STRONG_REFRESH, Action, Detector, apply_action
from .drift import DriftReport
from .metrics import ConfusionCounts, balanced_accuracy, macro_f1
from .protocol import DeploymentProtocol
from .seeding import seed_for

AGE_CAP = 10


@dataclass(frozen=True)
class WindowMetrics:
    bacc: float
    f1: float
    mem: float


@dataclass(frozen=True)
class MaintState:
    b_cur: float
    f1_cur: float
    mem_acc: float
    ks_prev: float
    wd_prev: float
    ks_init: float
    wd_init: float
    last_action_norm: float
    age_norm: float
    last_cost_norm: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "MaintState":
        values = [float(v) for v in values]
        if len(values) != len(STATE_FIELDS):
            raise ValueError(f"state needs {len(STATE_FIELDS)} values, got {len(values)}")
        return cls(*values)


STATE_FIELDS = tuple(f.name for f in fields(MaintState))


@dataclass(frozen=True)
class RewardBreakdown:
    perf_term: float
    retention_term: float
    gain_term: float
    cost_term: float
    total: float


@dataclass
class History:
    """Controller-side memory; the warm start counts as an A3 refresh."""

    last_action: Action = Action.JOINT
    age: int = 0

    def advance(self, action: Action) -> None:
        self.last_action = action
        self.age = 0 if action in STRONG_REFRESH else self.age + 1


def build_state(pre: WindowMetrics, drift: DriftReport, last_action: Action | int,
                age: int) -> MaintState:
    last_action = Action(last_action)
    return MaintState(
        pre.bacc, pre.f1, pre.mem,
        drift.ks_prev, drift.wd_prev, drift.ks_init, drift.wd_init,
        int(last_action) / 4.0,
        min(age, AGE_CAP) / AGE_CAP,
        last_action.cost / MAX_COST,
    )


def compute_reward(pre: WindowMetrics, post: WindowMetrics, action: Action | int,
                   cfg: RewardConfig) -> RewardBreakdown:
    action = Action(action)
    perf = cfg.alpha * post.f1 + (1.0 - cfg.alpha) * post.bacc
    retention = cfg.beta * post.mem
    gain = cfg.eta1 * (post.bacc - pre.bacc) + cfg.eta2 * (post.mem - pre.mem)
    cost = cfg.lambda_c * action.cost
    return RewardBreakdown(perf, retention, gain, cost, perf + retention + gain - cost)


def evaluate(det: Detector, z_eval, y_eval, z_mem, y_mem) -> WindowMetrics:
    pred, _ = det.predict_latent(z_eval)
    c = ConfusionCounts.from_labels(y_eval, pred)
    mem_pred, _ = det.predict_latent(z_mem)
    return WindowMetrics(balanced_accuracy(c), macro_f1(c),
                         balanced_accuracy(ConfusionCounts.from_labels(y_mem, mem_pred)))


RUNLOG_COLUMNS = (
    "t", "action", "action_id", "cost", "train_loss",
    "b_pre", "f1_pre", "mem_pre", "b_post", "f1_post", "mem_post",
    "ks_prev", "wd_prev", "ks_init", "wd_init",
    "perf_term", "retention_term", "gain_term", "cost_term", "reward",
)


class MaintenanceEnv:
    """One detector maintained over the deployment windows of a protocol.

    ``reset("replay")`` restores the post-warm-start detector and rewinds to
    the first deployment window; ``reset("continue")`` rewinds but keeps the
    current detector parameters.
    """

    def __init__(self, protocol: DeploymentProtocol, reward_cfg: RewardConfig | None = None,
                 update_cfg: UpdateConfig | None = None):
        self.protocol = protocol
        self.reward_cfg = reward_cfg or protocol.config.reward
        self.update_cfg = update_cfg or protocol.config.update
        self.steps = protocol.deployment_steps
        self.detector = protocol.warm.copy()
        self.episode = 0
        self.reset()

    @property
    def t(self) -> int:
        return self.steps[self.pos]

    def _evaluate(self, t: int) -> WindowMetrics:
        lat = self.protocol.latents[t]
        return evaluate(self.detector, lat.z_eval, lat.y_eval,
                        self.protocol.z_memory, self.protocol.memory.y)

    def _state(self) -> MaintState:
        self._pre = self._evaluate(self.t)
        return build_state(self._pre, self.protocol.drift[self.t],
                           self.history.last_action, self.history.age)

    def reset(self, mode: str = "replay") -> MaintState:
        if mode == "replay":
            self.detector.load_from(self.protocol.warm)
        elif mode != "continue":
            raise ValueError(f"unknown reset mode {mode!r}")
        self.pos = 0
        self.history = History()
        self.rows: list[dict] = []
        self.done = False
        self.state = self._state()
        return self.state

    def step(self, action: Action | int):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        action = Action(action)
        t = self.t
        lat = self.protocol.latents[t]
        loss = apply_action(self.detector, action, None, lat.y_train, self.update_cfg,
                            seed=seed_for(self.protocol.seed, "step", t),
                            budget=self.protocol.config.budgets.train, z_train=lat.z_train)
        pre = self._pre
        post = self._evaluate(t) if action != Action.KEEP else pre
        rb = compute_reward(pre, post, action, self.reward_cfg)
        d = self.protocol.drift[t]
        row = {
            "t": t, "action": action.label, "action_id": int(action), "cost": action.cost,
            "train_loss": loss,
            "b_pre": pre.bacc, "f1_pre": pre.f1, "mem_pre": pre.mem,
            "b_post": post.bacc, "f1_post": post.f1, "mem_post": post.mem,
            "ks_prev": d.ks_prev, "wd_prev": d.wd_prev, "ks_init": d.ks_init, "wd_init": d.wd_init,
            "perf_term": rb.perf_term, "retention_term": rb.retention_term,
            "gain_term": rb.gain_term, "cost_term": rb.cost_term, "reward": rb.total,
        }
        self.rows.append(row)
        self.history.advance(action)
        self.pos += 1
        if self.pos == len(self.steps):
            self.done = True
            self.episode += 1
            # terminal observation: post metrics with the last drift values
            self.state = build_state(post, d, self.history.last_action, self.history.age)
        else:
            self.state = self._state()
        return self.state, rb.total, self.done, row
