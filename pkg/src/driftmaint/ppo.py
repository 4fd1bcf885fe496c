"""PPO with a clipped surrogate, GAE advantages and separate policy / value MLPs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PPOConfig
from .detector import Action
from .errors import NumericalError
from .nn import Adam, DenseNet, log_softmax, save_state
from .seeding import rng_for, seed_for

log = logging.getLogger(__name__)

N_ACTIONS = len(Action)
OBS_DIM = 10


def _obs(state) -> np.ndarray:
    if hasattr(state, "as_array"):
        return state.as_array()
    return np.asarray(state, dtype=np.float64)


@dataclass
class PolicyNets:
    policy: DenseNet
    value: DenseNet

    @classmethod
    def build(cls, hidden=(64, 64), seed: int = 0, obs_dim: int = OBS_DIM,
              n_actions: int = N_ACTIONS) -> "PolicyNets":
        return cls(
            DenseNet.build([obs_dim, *hidden, n_actions], seed=seed_for(seed, "policy"), out_scale=0.01),
            DenseNet.build([obs_dim, *hidden, 1], seed=seed_for(seed, "value")),
        )

    def copy(self) -> "PolicyNets":
        return PolicyNets(self.policy.copy(), self.value.copy())

    def digest(self) -> str:
        return self.policy.digest() + self.value.digest()

    def save(self, path) -> None:
        state = {f"policy/{k}": v for k, v in self.policy.state_dict().items()}
        state.update({f"value/{k}": v for k, v in self.value.state_dict().items()})
        save_state(path, state)

    @classmethod
    def load(cls, path) -> "PolicyNets":
        with np.load(path, allow_pickle=False) as data:
            def sub(prefix):
                return {k.split("/", 1)[1]: data[k] for k in data.files if k.startswith(prefix + "/")}
            return cls(DenseNet.from_state_dict(sub("policy")), DenseNet.from_state_dict(sub("value")))


def policy_forward(nets: PolicyNets, states):
    """Action probabilities and value estimates for one state or a batch."""
    s = np.asarray(states, dtype=np.float64)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite state")
    probs = np.exp(log_softmax(nets.policy.forward(s)))
    values = nets.value.forward(s)[:, 0]
    if single:
        return probs[0], float(values[0])
    return probs, values


def clipped_surrogate(ratio, adv, clip_eps: float):
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


@dataclass
class RolloutBuffer:
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_value: float = 0.0
    advantages: np.ndarray | None = field(default=None, repr=False)
    returns: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.rewards)


def compute_advantages(rewards, values, dones, last_value: float, gamma: float,
                       gae_lambda: float, normalize: bool = True):
    """GAE(lambda); ``dones[t]`` marks the last transition of an episode.

    Returns ``(advantages, returns)``; returns use the raw advantages, the
    advantages are standardised afterwards when ``normalize`` is set.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * gae_lambda * live * running
        adv[t] = running
    returns = adv + values
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


def ppo_loss_and_grads(nets: PolicyNets, states, actions, old_log_probs, advantages,
                       returns, cfg: PPOConfig):
    """Loss = -surrogate - ent_coef * entropy + value_coef * value MSE, with gradients."""
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    n = len(actions)
    rows = np.arange(n)

    logits, pcache = nets.policy.forward_cached(states)
    logp = log_softmax(logits)
    p = np.exp(logp)
    lp_a = logp[rows, actions]
    ratio = np.exp(lp_a - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    entropy = -(p * logp).sum(axis=1)

    d_lp = np.where(unclipped <= clipped, ratio * advantages, 0.0)
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    g_logits = -(d_lp[:, None] * (onehot - p)) / n
    g_logits += cfg.ent_coef * p * (logp + entropy[:, None]) / n
    pgrads, _ = nets.policy.backward(pcache, g_logits, need_input_grad=False)

    v, vcache = nets.value.forward_cached(states)
    err = v[:, 0] - returns
    vgrads, _ = nets.value.backward(vcache, (2.0 * cfg.value_coef * err / n)[:, None],
                                    need_input_grad=False)

    policy_loss = -surrogate.mean()
    value_loss = float((err**2).mean())
    total = policy_loss - cfg.ent_coef * entropy.mean() + cfg.value_coef * value_loss
    if not np.isfinite(total):
        raise NumericalError("non-finite PPO loss")
    stats = {
        "loss": float(total),
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": float(entropy.mean()),
        "approx_kl": float((old_log_probs - lp_a).mean()),
        "clip_frac": float((np.abs(ratio - 1.0) > cfg.clip_eps).mean()),
        "ratio_max_dev": float(np.abs(ratio - 1.0).max()),
    }
    return stats, pgrads, vgrads


def _clip_norm(grads, max_norm):
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        return [g * (max_norm / (norm + 1e-12)) for g in grads]
    return grads


class PPOLearner:
    def __init__(self, nets: PolicyNets, cfg: PPOConfig, seed: int):
        self.nets = nets
        self.cfg = cfg
        self.rng = rng_for(seed, "ppo-learner")
        self.policy_opt = Adam(nets.policy.params(), lr=cfg.lr, eps=1e-5)
        self.value_opt = Adam(nets.value.params(), lr=cfg.lr, eps=1e-5)

    def update(self, buf: RolloutBuffer) -> dict:
        cfg = self.cfg
        adv, ret = compute_advantages(buf.rewards, buf.values, buf.dones, buf.last_value,
                                      cfg.gamma, cfg.gae_lambda)
        buf.advantages, buf.returns = adv, ret
        n = len(buf)
        first = None
        history = []
        for _ in range(cfg.ppo_epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                stats, pg, vg = ppo_loss_and_grads(
                    self.nets, buf.states[idx], buf.actions[idx], buf.log_probs[idx],
                    adv[idx], ret[idx], cfg)
                if first is None:
                    first = stats
                self.policy_opt.step(_clip_norm(pg, cfg.max_grad_norm))
                self.value_opt.step(_clip_norm(vg, cfg.max_grad_norm))
                history.append(stats)
        out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
        out["first_ratio_max_dev"] = first["ratio_max_dev"]
        return out


def ppo_update(nets: PolicyNets, buf: RolloutBuffer, cfg: PPOConfig, seed: int = 0) -> dict:
    """Single-rollout convenience wrapper (fresh optimizers)."""
    return PPOLearner(nets, cfg, seed).update(buf)


def collect_rollout(env, nets: PolicyNets, state, n_steps: int, rng: np.random.Generator):
    cols = {k: [] for k in ("states", "actions", "log_probs", "rewards", "values", "dones")}
    episode_rewards = []
    for _ in range(n_steps):
        obs = _obs(state)
        probs, value = policy_forward(nets, obs)
        a = int(rng.choice(len(probs), p=probs))
        state, reward, done, _ = env.step(a)
        cols["states"].append(obs)
        cols["actions"].append(a)
        cols["log_probs"].append(float(np.log(probs[a])))
        cols["rewards"].append(float(reward))
        cols["values"].append(value)
        cols["dones"].append(bool(done))
        episode_rewards.append(float(reward))
        if done:
            state = env.reset()
    _, last_value = policy_forward(nets, _obs(state))
    buf = RolloutBuffer(
        states=np.array(cols["states"]), actions=np.array(cols["actions"], dtype=np.int64),
        log_probs=np.array(cols["log_probs"]), rewards=np.array(cols["rewards"]),
        values=np.array(cols["values"]), dones=np.array(cols["dones"]),
        last_value=float(last_value),
    )
    return buf, state


def train_controller(env, cfg: PPOConfig, seed: int | None = None,
                     nets: PolicyNets | None = None):
    """Train on repeated episodes of ``env`` for ``total_env_steps`` transitions.

    Returns the policy networks and one stats dict per rollout.
    """
    seed = cfg.seed if seed is None else seed
    nets = nets or PolicyNets.build(cfg.hidden, seed=seed)
    learner = PPOLearner(nets, cfg, seed)
    rng = rng_for(seed, "ppo-rollout")
    state = env.reset()
    done_steps, curve = 0, []
    while done_steps < cfg.total_env_steps:
        n = min(cfg.n_steps, cfg.total_env_steps - done_steps)
        buf, state = collect_rollout(env, nets, state, n, rng)
        stats = learner.update(buf)
        done_steps += n
        stats.update(env_steps=done_steps, mean_reward=float(buf.rewards.mean()),
                     mean_cost=float(np.mean([Action(a).cost for a in buf.actions])))
        curve.append(stats)
        log.debug("ppo %d steps: reward %.4f entropy %.3f", done_steps,
                  stats["mean_reward"], stats["entropy"])
    return nets, curve


def greedy_action(nets: PolicyNets, state) -> int:
    probs, _ = policy_forward(nets, _obs(state))
    return int(np.argmax(probs))


def greedy_rollout(nets: PolicyNets, env) -> list[dict]:
    """One replay episode with argmax actions, no learning."""
    state = env.reset()
    done = False
    while not done:
        state, _, done, _ = env.step(greedy_action(nets, state))
    return list(env.rows)


class FixedBestActionEnv:
    """Bandit-style sanity environment: one action pays 1, the rest pay 0."""

    def __init__(self, best_action: int = 1, episode_len: int = 10, seed: int = 0):
        self.best_action = int(best_action)
        self.episode_len = episode_len
        self.rng = rng_for(seed, "bandit-env")
        self.rows: list[dict] = []
        self.reset()

    def _state(self):
        return self.rng.random(OBS_DIM)

    def reset(self):
        self.t = 0
        self.rows = []
        self.state = self._state()
        return self.state

    def step(self, action: int):
        reward = 1.0 if int(action) == self.best_action else 0.0
        self.t += 1
        row = {"t": self.t, "action_id": int(action), "reward": reward}
        self.rows.append(row)
        done = self.t >= self.episode_len
        self.state = self._state()
        return self.state, reward, done, row
