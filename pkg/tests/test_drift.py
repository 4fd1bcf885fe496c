import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp, wasserstein_distance

from driftmaint.drift import DriftReport, drift_pair, ks_1d, read_drift_csv, wd1_1d, window_drift, write_drift_csv
from driftmaint.errors import ConfigError
from driftmaint.nn import DenseNet

from _oracles import integer_instances, ks_oracle, wd_oracle


def test_ks_examples():
    assert ks_1d([0, 1], [0, 1]) == 0.0
    assert ks_1d([0, 0], [1, 1]) == 1.0
    assert ks_1d([0, 1, 2], [0, 1, 5]) == 1 / 3


def test_wd_examples():
    assert wd1_1d([3.0, 1.0], [1.0, 3.0]) == 0.0
    assert wd1_1d([0.0], [-2.5]) == 2.5
    assert wd1_1d([0, 1], [1, 2]) == 1.0


def test_empty_inputs_rejected():
    with pytest.raises(ConfigError):
        ks_1d([], [1.0])
    with pytest.raises(ConfigError):
        wd1_1d([1.0], [])


def test_ks_matches_exact_oracle():
    for a, b in integer_instances(1000, 0):
        assert ks_1d(a, b) == float(ks_oracle(a, b))


def test_wd_matches_exact_oracle():
    for a, b in integer_instances(1000, 1):
        assert wd1_1d(a, b) == float(wd_oracle(a, b))


def test_drift_pair_is_mean_of_oracles():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n, m, d = rng.integers(1, 15), rng.integers(1, 15), rng.integers(1, 5)
        za = rng.integers(-4, 5, size=(n, d)).astype(float)
        zb = rng.integers(-4, 5, size=(m, d)).astype(float)
        ks, wd = drift_pair(za, zb)
        assert ks == statistics.fmean(float(ks_oracle(za[:, k], zb[:, k])) for k in range(d))
        assert wd == statistics.fmean(float(wd_oracle(za[:, k], zb[:, k])) for k in range(d))


def test_agrees_with_scipy_on_continuous_data():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.normal(size=rng.integers(1, 60))
        b = rng.normal(0.3, 1.2, size=rng.integers(1, 60))
        assert ks_1d(a, b) == pytest.approx(ks_2samp(a, b).statistic, abs=1e-12)
        assert wd1_1d(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-12)


floats = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=15)


@settings(max_examples=200, deadline=None)
@given(floats, floats, floats)
def test_metric_properties(a, b, c):
    assert ks_1d(a, b) == ks_1d(b, a)
    assert wd1_1d(a, b) == pytest.approx(wd1_1d(b, a), abs=1e-9)
    assert 0.0 <= ks_1d(a, b) <= 1.0
    assert ks_1d(a, c) <= ks_1d(a, b) + ks_1d(b, c) + 1e-12
    assert wd1_1d(a, c) <= wd1_1d(a, b) + wd1_1d(b, c) + 1e-9


def test_drift_pair_examples():
    rng = np.random.default_rng(4)
    z = rng.integers(0, 10, size=(30, 3)).astype(float)
    assert drift_pair(z, z.copy(), subsample=30, rng=rng) == (0.0, 0.0)
    assert drift_pair(z, z + 20.0) == (1.0, 20.0)
    za = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    zb = np.array([[0.0, 1.0], [1.0, 2.0], [5.0, 3.0]])
    # column 0: KS 1/3, W1 1; column 1: KS 1/3, W1 1
    ks, wd = drift_pair(za, zb)
    assert ks == pytest.approx(1 / 3, abs=1e-15) and wd == 1.0


def test_drift_pair_width_mismatch():
    with pytest.raises(ConfigError):
        drift_pair(np.zeros((2, 2)), np.zeros((2, 3)))


def test_subsample_is_seeded():
    rng = np.random.default_rng(5)
    za, zb = rng.normal(size=(500, 4)), rng.normal(size=(500, 4))
    a = drift_pair(za, zb, 100, np.random.default_rng(1))
    b = drift_pair(za, zb, 100, np.random.default_rng(1))
    assert a == b


def test_stationary_latents_show_small_drift():
    rng = np.random.default_rng(6)
    enc = DenseNet.build([10, 16, 6], seed=0).freeze()
    x = [rng.normal(size=(2000, 10)) for _ in range(3)]
    report = window_drift(enc.forward(x[2]), enc.forward(x[1]), enc.forward(x[0]), 3, 2000, rng)
    assert max(report.indicators().values()) < 0.1


def test_identical_to_init_pool():
    z = np.random.default_rng(7).normal(size=(40, 3))
    r = window_drift(z, z[::-1], z, 4, 40, np.random.default_rng(0))
    assert r.ks_init == 0.0 and r.wd_init == 0.0


def test_drift_csv_roundtrip(tmp_path):
    reports = [DriftReport(4, 0.1, 0.2, 0.3, 1 / 3), DriftReport(5, 0.0, 0.0, 0.5, 2.0)]
    write_drift_csv(reports, tmp_path / "d.csv")
    assert read_drift_csv(tmp_path / "d.csv") == reports
