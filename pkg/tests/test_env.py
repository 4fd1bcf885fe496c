import numpy as np
import pytest

from driftmaint.config import RewardConfig
from driftmaint.detector import Action
from driftmaint.drift import DriftReport
from driftmaint.env import (AGE_CAP, History, MaintenanceEnv, MaintState, RUNLOG_COLUMNS, WindowMetrics,
                            build_state, compute_reward)
from driftmaint.protocol import prepare_protocol

RC = RewardConfig()
ZERO_DRIFT = DriftReport(5, 0.0, 0.0, 0.0, 0.0)


def test_reward_hand_case():
    m = WindowMetrics(bacc=0.7, f1=0.8, mem=0.9)
    rb = compute_reward(m, m, Action.JOINT, RC)
    assert abs(rb.total - 1.17) <= 1e-12
    assert rb.gain_term == 0.0 and abs(rb.cost_term - 0.03) <= 1e-15


def test_reward_cost_difference():
    m = WindowMetrics(0.61, 0.55, 0.72)
    diff = compute_reward(m, m, Action.JOINT, RC).total - compute_reward(m, m, Action.KEEP, RC).total
    assert abs(diff + 0.03) <= 1e-12


def test_reward_zero_case():
    z = WindowMetrics(0.0, 0.0, 0.0)
    assert compute_reward(z, z, Action.KEEP, RC).total == 0.0


def test_reward_gain_term():
    pre, post = WindowMetrics(0.5, 0.5, 0.8), WindowMetrics(0.7, 0.6, 0.7)
    rb = compute_reward(pre, post, Action.HEAD, RC)
    assert rb.gain_term == pytest.approx(1.0 * 0.2 + 0.5 * -0.1, abs=1e-12)
    assert rb.total == pytest.approx(0.5 * 0.6 + 0.5 * 0.7 + 0.5 * 0.7 + 0.15 - 0.01, abs=1e-12)


def test_state_boundary_values():
    s = build_state(WindowMetrics(1.0, 1.0, 1.0), ZERO_DRIFT, Action.KEEP, AGE_CAP + 3)
    np.testing.assert_array_equal(s.as_array(), [1, 1, 1, 0, 0, 0, 0, 0, 1, 0])
    assert MaintState.from_array(s.as_array()) == s


def test_state_after_warm_start():
    h = History()
    s = build_state(WindowMetrics(0.9, 0.9, 0.9), ZERO_DRIFT, h.last_action, h.age)
    assert s.age_norm == 0.0
    assert s.last_action_norm == 0.75
    assert s.last_cost_norm == pytest.approx(0.6, abs=1e-15)


def test_history_age():
    h = History()
    for a in (Action.KEEP, Action.HEAD, Action.ADAPTER):
        h.advance(a)
    assert h.age == 3
    h.advance(Action.RESET_JOINT)
    assert h.age == 0 and h.last_action == Action.RESET_JOINT


def _run(env, actions):
    env.reset()
    for a in actions:
        env.step(a)
    return list(env.rows)


def test_keep_leaves_metrics_unchanged(small_protocol):
    env = MaintenanceEnv(small_protocol)
    _, _, _, row = env.step(Action.KEEP)
    assert (row["b_pre"], row["f1_pre"], row["mem_pre"]) == (row["b_post"], row["f1_post"], row["mem_post"])
    assert row["train_loss"] is None


def test_episode_length_and_columns(small_protocol):
    env = MaintenanceEnv(small_protocol)
    n = small_protocol.stream.T - small_protocol.stream.K
    rows = _run(env, [Action.JOINT] * n)
    assert len(rows) == n and env.done
    assert list(rows[0]) == list(RUNLOG_COLUMNS)
    assert [r["t"] for r in rows] == small_protocol.deployment_steps
    with pytest.raises(RuntimeError):
        env.step(Action.KEEP)


def test_reward_recomputed_from_row(small_protocol):
    env = MaintenanceEnv(small_protocol)
    for row in _run(env, [Action.HEAD, Action.KEEP, Action.RESET_JOINT]):
        pre = WindowMetrics(row["b_pre"], row["f1_pre"], row["mem_pre"])
        post = WindowMetrics(row["b_post"], row["f1_post"], row["mem_post"])
        assert row["reward"] == compute_reward(pre, post, row["action_id"], RC).total


def test_replay_is_deterministic(small_protocol):
    env = MaintenanceEnv(small_protocol)
    start = env.reset()
    plan = [Action.JOINT, Action.ADAPTER, Action.HEAD]
    first = _run(env, plan)
    again = env.reset()
    assert again == start
    assert _run(env, plan) == first
    keep = [Action.KEEP] * 3
    assert _run(env, keep) == _run(env, keep)


def test_reset_keeps_protocol_hashes(small_protocol):
    before = small_protocol.hashes()
    env = MaintenanceEnv(small_protocol)
    _run(env, [Action.RESET_JOINT] * 3)
    env.reset()
    assert small_protocol.hashes() == before


def test_continue_mode_keeps_detector(small_protocol):
    env = MaintenanceEnv(small_protocol)
    _run(env, [Action.JOINT] * 3)
    trained = env.detector.digests()
    env.reset("continue")
    assert env.detector.digests() == trained
    env.reset("replay")
    assert env.detector.digests() == small_protocol.warm.digests()
    with pytest.raises(ValueError):
        env.reset("rewind")


def test_prefix_is_causal(small_cfg, small_stream):
    full = prepare_protocol(small_stream, small_cfg, seed=0)
    short = prepare_protocol(small_stream.truncated(small_stream.T - 1), small_cfg, seed=0)
    plan = [Action.HEAD, Action.JOINT]
    assert _run(MaintenanceEnv(short), plan) == _run(MaintenanceEnv(full), plan)


def test_evaluation_splits_are_disjoint(small_protocol):
    for sp in small_protocol.splits.values():
        assert not set(sp.train_idx) & set(sp.eval_idx)
    assert set(small_protocol.memory.source[:, 0]) <= {w.index for w in small_protocol.stream.init_windows()}
