"""Sampling checks for the analytic gain, QBER and arrival statistics.

Each trial is one pulse train: ``n ~ Poisson(mu)`` photons leave Alice, each
survives the channel (and Bob's attenuator and detector) independently, and
the detector also fires on an independent dark count.  The error model
mirrors the closed-form QBER: clicks with a dark count err with probability
1/2, photon-only clicks err with probability ``e_d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ValidationError
from .model import ChannelParams, DetectorParams, PhotonDistribution, transmittance

GENERATOR = "PCG64"
_CHUNK = 1_000_000


@dataclass(frozen=True)
class McConfig:
    trials: int
    seed: int
    mu: float
    channel: ChannelParams = field(default_factory=ChannelParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    decoy_index: int | None = None
    e_d: float = 0.015

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValidationError(f"trials must be a positive integer, got {self.trials}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError(f"seed must fit in 64 bits, got {self.seed}")
        if not self.mu >= 0:
            raise ValidationError(f"mu must be >= 0, got {self.mu}")
        if self.decoy_index is not None:
            self.detector.setting(self.decoy_index)

    def survival(self) -> float:
        """Per-photon probability of producing a click."""
        eta_k = 1.0 if self.decoy_index is None else self.detector.setting(self.decoy_index)
        return transmittance(self.channel) * eta_k * self.detector.eta_d


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int
    generator: str = GENERATOR

    def z_score(self, target: float) -> float:
        diff = self.mean - target
        if self.std_error == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.std_error

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "trials": self.trials,
                "seed": self.seed, "generator": self.generator}


def _chunks(trials: int):
    done = 0
    while done < trials:
        size = min(_CHUNK, trials - done)
        yield size
        done += size


def _clicks(rng: np.random.Generator, cfg: McConfig, size: int):
    photons = rng.poisson(cfg.mu, size)
    survivors = rng.binomial(photons, cfg.survival())
    dark = rng.random(size) < cfg.detector.p_d
    return survivors > 0, dark


def _bernoulli(hits: int, n: int, trials: int, seed: int) -> McEstimate:
    mean = hits / n
    return McEstimate(mean, math.sqrt(mean * (1.0 - mean) / n), trials, seed)


def estimate_gain(config: McConfig) -> McEstimate:
    """Click probability per train (Q, or Q_k when ``decoy_index`` is set)."""
    rng = np.random.default_rng(config.seed)
    hits = 0
    for size in _chunks(config.trials):
        signal, dark = _clicks(rng, config, size)
        hits += int(np.count_nonzero(signal | dark))
    return _bernoulli(hits, config.trials, config.trials, config.seed)


def estimate_qber(config: McConfig) -> McEstimate:
    """Fraction of clicks that carry a bit error.

    The standard error is binomial in the number of clicks, not of trains.
    """
    rng = np.random.default_rng(config.seed)
    clicks = errors = 0
    for size in _chunks(config.trials):
        signal, dark = _clicks(rng, config, size)
        flip = rng.random(size)
        err = np.where(dark, flip < 0.5, signal & (flip < config.e_d))
        clicks += int(np.count_nonzero(signal | dark))
        errors += int(np.count_nonzero(err))
    if clicks == 0:
        raise DegenerateError(f"no clicks in {config.trials} trials; QBER estimate undefined")
    return _bernoulli(errors, clicks, config.trials, config.seed)


def estimate_arrival_distribution(config: McConfig, n_max: int) -> PhotonDistribution:
    """Histogram of photons reaching Bob (after the fiber, before his attenuator).

    Mass above ``n_max`` is returned in the ``tail`` field.
    """
    if n_max < 0:
        raise ValidationError(f"n_max must be >= 0, got {n_max}")
    rng = np.random.default_rng(config.seed)
    eta_t = transmittance(config.channel)
    counts = np.zeros(n_max + 2, dtype=np.int64)
    for size in _chunks(config.trials):
        arrived = rng.binomial(rng.poisson(config.mu, size), eta_t)
        counts += np.bincount(np.minimum(arrived, n_max + 1), minlength=n_max + 2)
    freq = counts / config.trials
    return PhotonDistribution(freq[:-1], tail=float(freq[-1]))
