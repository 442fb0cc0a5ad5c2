import numpy as np
import pytest

from camsync.netsim import (CLIENT_TO_LEADER, LEADER_TO_CLIENT, LatencyModel, latency_stats, sample_many,
                            sample_one_way)
from camsync.timebase import MS, US


def test_constant_model_is_deterministic():
    m = LatencyModel.constant(800 * US, 1200 * US)
    assert {sample_one_way(m, LEADER_TO_CLIENT) for _ in range(20)} == {800 * US}
    assert sample_one_way(m, CLIENT_TO_LEADER) == 1200 * US
    assert m.asymmetry == 400 * US


def test_unknown_direction():
    with pytest.raises(ValueError):
        sample_one_way(LatencyModel(), "sideways")


@pytest.mark.parametrize("kw", [{"base_leader_to_client": -1}, {"spike_probability": 1.5},
                                {"jitter_client_to_leader": -5}])
def test_validation(kw):
    with pytest.raises(ValueError):
        LatencyModel(**kw)


def test_seeded_models_repeat():
    a = [sample_one_way(LatencyModel(seed=3), LEADER_TO_CLIENT) for _ in range(1)]
    b = [sample_one_way(LatencyModel(seed=3), LEADER_TO_CLIENT) for _ in range(1)]
    assert a == b


def test_sample_means_match_model():
    m = LatencyModel(spike_probability=0.0)
    rng = np.random.default_rng(1)
    for d in (LEADER_TO_CLIENT, CLIENT_TO_LEADER):
        x = sample_many(m, d, 200_000, rng)
        assert x.min() >= m.base(d)
        assert abs(x.mean() - m.mean(d)) < 0.01 * m.mean(d)


def test_scalar_and_vector_agree_in_distribution():
    m = LatencyModel()
    rng = np.random.default_rng(2)
    a = np.array([sample_one_way(m, CLIENT_TO_LEADER, rng) for _ in range(20_000)])
    b = sample_many(m, CLIENT_TO_LEADER, 20_000, np.random.default_rng(3))
    assert abs(np.median(a) - np.median(b)) < 0.05 * np.median(a)


def test_expected_outlier_fraction_matches_monte_carlo():
    m = LatencyModel()
    rng = np.random.default_rng(4)
    n = 400_000
    rtt = sample_many(m, LEADER_TO_CLIENT, n, rng) + sample_many(m, CLIENT_TO_LEADER, n, rng)
    empirical = float(np.mean(rtt > 10 * MS))
    predicted = m.expected_outlier_fraction(10 * MS)
    se = np.sqrt(predicted * (1 - predicted) / n)
    assert abs(empirical - predicted) < 4 * se
    # roughly 64 in 10,000 with the default link
    assert 0.005 < predicted < 0.008


def test_outlier_fraction_edges():
    assert LatencyModel.constant(6 * MS).expected_outlier_fraction(10 * MS) == 1.0
    assert LatencyModel.constant(1 * MS).expected_outlier_fraction(10 * MS) == 0.0


def test_latency_stats():
    s = latency_stats([1, 2, 3, 4])
    assert (s.mean, s.min, s.max, s.count) == (2.5, 1, 4, 4)
    assert s.stdev == pytest.approx(np.std([1, 2, 3, 4]))
    both = latency_stats({"a": [1], "b": [2, 2]})
    assert both["b"].mean == 2.0
    with pytest.raises(ValueError):
        latency_stats([])


def test_calibration_against_table_values():
    # minima 517/479 us; outlier-rejected means near 1133/1878 us
    m = LatencyModel()
    rng = np.random.default_rng(11)
    out = sample_many(m, LEADER_TO_CLIENT, 10_000, rng)
    back = sample_many(m, CLIENT_TO_LEADER, 10_000, rng)
    keep = out + back <= 10 * MS
    assert out.min() >= 517 * US and out.min() - 517 * US < 5 * US
    assert back.min() >= 479 * US and back.min() - 479 * US < 5 * US
    assert abs(out[keep].mean() - 1133 * US) < 0.05 * 1133 * US
    assert abs(back[keep].mean() - 1878 * US) < 0.05 * 1878 * US


def test_stats_examples():
    one = latency_stats([1 * MS])
    assert (one.mean, one.min, one.max, one.stdev) == (1 * MS, 1 * MS, 1 * MS, 0.0)
    two = latency_stats([1 * MS, 3 * MS])
    assert (two.mean, two.min) == (2 * MS, 1 * MS)
