from __future__ import annotations

import numpy as np
import pytest

from ddrrdps.errors import DegenerateError, ValidationError
from ddrrdps.model import (
    ChannelParams,
    DetectorParams,
    click_probability,
    decoy_gain,
    overall_gain,
    qber,
)
from ddrrdps.montecarlo import (
    GENERATOR,
    McConfig,
    McEstimate,
    estimate_arrival_distribution,
    estimate_gain,
    estimate_qber,
)

DET128 = DetectorParams.table_one(128)
CH50 = ChannelParams(0.2, 50.0)


def config(**kw):
    base = dict(trials=200_000, seed=12345, mu=1.0, channel=CH50, detector=DET128)
    return McConfig(**(base | kw))


def test_config_validation():
    with pytest.raises(ValidationError):
        config(trials=0)
    with pytest.raises(ValidationError):
        config(trials=2.5)
    with pytest.raises(ValidationError):
        config(seed=-1)
    with pytest.raises(ValidationError):
        config(mu=-0.1)
    with pytest.raises(IndexError):
        config(decoy_index=3)


def test_estimate_serialization():
    est = estimate_gain(config(trials=1000))
    d = est.as_dict()
    assert d["trials"] == 1000 and d["seed"] == 12345 and d["generator"] == GENERATOR
    assert set(d) == {"mean", "std_error", "trials", "seed", "generator"}


def test_z_score_edge_cases():
    assert McEstimate(0.0, 0.0, 10, 1).z_score(0.0) == 0.0
    assert McEstimate(0.1, 0.0, 10, 1).z_score(0.0) == np.inf
    assert McEstimate(0.1, 0.05, 10, 1).z_score(0.0) == pytest.approx(2.0)


def test_seed_determinism():
    a = estimate_gain(config())
    b = estimate_gain(config())
    assert a == b
    assert estimate_qber(config()) == estimate_qber(config())
    c = estimate_gain(config(seed=54321))
    assert c.mean != a.mean


def test_vacuum_without_dark_counts_is_all_zero():
    cfg = config(mu=0.0, detector=DetectorParams(0.19, 0.0))
    est = estimate_gain(cfg)
    assert est.mean == 0.0 and est.std_error == 0.0
    with pytest.raises(DegenerateError):
        estimate_qber(cfg)


def test_dark_counts_only_give_half_error():
    det = DetectorParams(0.19, 0.2)
    cfg = config(mu=0.0, detector=det)
    assert abs(estimate_gain(cfg).z_score(0.2)) < 5
    assert abs(estimate_qber(cfg).z_score(0.5)) < 5


def test_gain_and_qber_match_closed_forms_table_one():
    cfg = config(trials=1_000_000)
    assert abs(estimate_gain(cfg).z_score(overall_gain(1.0, CH50, DET128))) <= 5
    for k in (1, 2):
        est = estimate_gain(config(trials=1_000_000, decoy_index=k))
        assert abs(est.z_score(decoy_gain(1.0, CH50, DET128, k))) <= 5
    assert abs(estimate_qber(cfg).z_score(qber(1.0, CH50, DET128, 0.015))) <= 5


def test_chunking_does_not_change_the_stream_length():
    # more trials than one chunk; the estimate must count all of them
    est = estimate_gain(config(trials=1_500_001))
    assert est.trials == 1_500_001


def test_arrival_histogram_reproduces_gain():
    cfg = config(trials=400_000, mu=2.0, channel=ChannelParams(0.2, 5.0))
    dist = estimate_arrival_distribution(cfg, 12)
    assert dist.normalized
    assert abs(dist.probs.sum() - 1.0) < 1e-12
    gain = estimate_gain(cfg)
    for k in range(3):
        t = click_probability(dist, DET128, k)
        target = decoy_gain(2.0, cfg.channel, DET128, k)
        # histogram error and gain error are comparable; allow both
        assert abs(t - target) <= 5 * np.sqrt(2) * np.sqrt(target * (1 - target) / cfg.trials)
    assert abs(click_probability(dist, DET128, 0) - gain.mean) <= \
        5 * np.sqrt(2) * gain.std_error


def test_arrival_tail_is_recorded():
    cfg = config(trials=10_000, mu=20.0, channel=ChannelParams(0.2, 0.0))
    dist = estimate_arrival_distribution(cfg, 5)
    assert dist.tail > 0.9
    assert not dist.normalized
    with pytest.raises(ValidationError):
        estimate_arrival_distribution(cfg, -1)
