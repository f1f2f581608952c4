"""Analytic channel and detector model.

All click/gain quantities are per pulse train.  Probabilities close to zero
are evaluated through ``expm1``/``log1p`` so that long-distance values keep
full relative precision.

Decoy settings are addressed by zero-based index ``k`` into
``DetectorParams.decoy_settings``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DomainError, ValidationError

DEFAULT_N_MAX = 10
NORMALIZATION_TOL = 1e-9

# Reference operating values.
TABLE_ONE_BETA = 0.2
TABLE_ONE_ETA_D = 0.19
TABLE_ONE_E_D = 0.015
TABLE_ONE_F = 1.16
TABLE_ONE_DARK_PER_PULSE = 1e-9
DEFAULT_DECOY_SETTINGS = (1.0, 0.8, 0.6)


@dataclass(frozen=True)
class ChannelParams:
    """Fiber link: loss coefficient ``beta`` (dB/km) and length ``distance`` (km)."""

    beta: float = TABLE_ONE_BETA
    distance: float = 0.0

    def __post_init__(self) -> None:
        if not self.beta >= 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if not self.distance >= 0:
            raise DomainError(f"distance must be >= 0, got {self.distance}")

    @property
    def transmittance(self) -> float:
        return transmittance(self)

    def at(self, distance: float) -> "ChannelParams":
        return ChannelParams(self.beta, distance)


@dataclass(frozen=True)
class DetectorParams:
    """Threshold detector behind Bob's variable attenuator.

    ``p_d`` is the dark-count probability per pulse train; the same number
    plays the role of the vacuum-operator dark-count factor in the
    detector-decoy constraints.
    """

    eta_d: float = TABLE_ONE_ETA_D
    p_d: float = TABLE_ONE_DARK_PER_PULSE
    decoy_settings: tuple[float, ...] = DEFAULT_DECOY_SETTINGS

    def __post_init__(self) -> None:
        object.__setattr__(self, "decoy_settings", tuple(float(e) for e in self.decoy_settings))
        if not 0.0 <= self.eta_d <= 1.0:
            raise DomainError(f"eta_d must lie in [0, 1], got {self.eta_d}")
        if not 0.0 <= self.p_d < 1.0:
            raise DomainError(f"p_d must lie in [0, 1), got {self.p_d}")
        if not self.decoy_settings:
            raise ValidationError("at least one decoy setting is required")
        for e in self.decoy_settings:
            if not 0.0 < e <= 1.0:
                raise DomainError(f"decoy settings must lie in (0, 1], got {e}")
        # duplicates are tolerated so redundant settings can be studied
        if any(b > a for a, b in zip(self.decoy_settings, self.decoy_settings[1:])):
            raise ValidationError(f"decoy settings must be non-increasing: {self.decoy_settings}")

    @classmethod
    def table_one(cls, L: int, dark_per_pulse: float = TABLE_ONE_DARK_PER_PULSE,
                  **overrides) -> "DetectorParams":
        """Reference detector with the per-train dark count ``1e-9 * L``."""
        return cls(p_d=dark_per_pulse * L, **overrides)

    def setting(self, k: int) -> float:
        if not 0 <= k < len(self.decoy_settings):
            raise IndexError(f"decoy index {k} out of range for {len(self.decoy_settings)} settings")
        return self.decoy_settings[k]


@dataclass(frozen=True)
class ProtocolParams:
    L: int
    mu: float
    v_th: int
    f: float = TABLE_ONE_F
    e_d: float = TABLE_ONE_E_D

    def __post_init__(self) -> None:
        if int(self.L) != self.L or self.L < 2:
            raise DomainError(f"L must be an integer >= 2, got {self.L}")
        if not self.mu > 0:
            raise DomainError(f"mu must be > 0, got {self.mu}")
        if int(self.v_th) != self.v_th or self.v_th < 0:
            raise DomainError(f"v_th must be a non-negative integer, got {self.v_th}")
        if not self.f >= 1:
            raise DomainError(f"f must be >= 1, got {self.f}")
        if not 0.0 <= self.e_d <= 0.5:
            raise DomainError(f"e_d must lie in [0, 1/2], got {self.e_d}")


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Received photon-number probabilities ``p_0 .. p_{n_max}``.

    ``tail`` carries any probability mass above ``n_max`` (empirical
    histograms); a distribution with ``tail > NORMALIZATION_TOL`` is
    sub-normalized and rejected by the click-probability operations.
    """

    probs: np.ndarray
    tail: float = 0.0

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float).ravel()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.size == 0:
            raise ValidationError("empty photon distribution")
        if np.any(p < -NORMALIZATION_TOL) or np.any(p > 1 + NORMALIZATION_TOL):
            raise ValidationError("photon probabilities must lie in [0, 1]")
        if not -NORMALIZATION_TOL <= self.tail <= 1.0:
            raise ValidationError(f"tail mass must lie in [0, 1], got {self.tail}")
        total = float(p.sum()) + self.tail
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, expected 1")

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def normalized(self) -> bool:
        return self.tail <= NORMALIZATION_TOL

    @classmethod
    def poisson(cls, mean: float, n_max: int = DEFAULT_N_MAX) -> "PhotonDistribution":
        """Poisson pmf truncated at ``n_max`` and renormalized."""
        from scipy.stats import poisson

        p = poisson.pmf(np.arange(n_max + 1), mean)
        return cls(p / p.sum())

    @classmethod
    def fock(cls, n: int, n_max: int = DEFAULT_N_MAX) -> "PhotonDistribution":
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhotonDistribution):
            return NotImplemented
        return self.tail == other.tail and np.array_equal(self.probs, other.probs)

    __hash__ = None


def _check_mu(mu: float) -> None:
    if not mu >= 0:
        raise DomainError(f"mu must be >= 0, got {mu}")


def transmittance(channel: ChannelParams) -> float:
    """Channel survival probability ``10**(-beta*d/10)``."""
    if channel.beta < 0 or channel.distance < 0:
        raise DomainError("beta and distance must be non-negative")
    return 10.0 ** (-channel.beta * channel.distance / 10.0)


def _click_given_signal(x: float, p_d: float) -> float:
    # 1 - (1 - p_d) exp(-x)
    return -math.expm1(math.log1p(-p_d) - x)


def overall_gain(mu: float, channel: ChannelParams, detector: DetectorParams) -> float:
    """Q = 1 - (1 - p_d) exp(-mu eta_t eta_d)."""
    _check_mu(mu)
    return _click_given_signal(mu * transmittance(channel) * detector.eta_d, detector.p_d)


def qber(mu: float, channel: ChannelParams, detector: DetectorParams, e_d: float) -> float:
    """Bit error rate: misaligned signal clicks plus half of the dark counts, over Q."""
    _check_mu(mu)
    if not 0.0 <= e_d <= 0.5:
        raise DomainError(f"e_d must lie in [0, 1/2], got {e_d}")
    q = overall_gain(mu, channel, detector)
    if q <= 0.0:
        raise DegenerateError("overall gain is zero; QBER undefined")
    return qber_numerator(mu, channel, detector, e_d) / q


def qber_numerator(mu: float, channel: ChannelParams, detector: DetectorParams,
                   e_d: float) -> float:
    """Error-click probability ``e_b * Q``."""
    x = mu * transmittance(channel) * detector.eta_d
    return e_d * (1.0 - detector.p_d) * -math.expm1(-x) + 0.5 * detector.p_d


def decoy_yield(i: int, channel: ChannelParams, detector: DetectorParams, k: int) -> float:
    """Click probability of an i-photon train under decoy setting ``k``."""
    if i < 0:
        raise DomainError(f"photon number must be >= 0, got {i}")
    eta = transmittance(channel) * detector.setting(k) * detector.eta_d
    if eta >= 1.0:
        return 1.0 if i > 0 else detector.p_d
    return -math.expm1(math.log1p(-detector.p_d) + i * math.log1p(-eta))


def decoy_gain(mu: float, channel: ChannelParams, detector: DetectorParams, k: int) -> float:
    """Q_k = 1 - (1 - p_d) exp(-mu eta_t eta_k eta_d)."""
    _check_mu(mu)
    eta_k = detector.setting(k)
    return _click_given_signal(mu * transmittance(channel) * eta_k * detector.eta_d, detector.p_d)


def _require_normalized(dist: PhotonDistribution) -> None:
    if not dist.normalized:
        raise ValidationError(f"distribution is sub-normalized (tail={dist.tail:.3e})")


def vacuum_probability(dist: PhotonDistribution, detector: DetectorParams, k: int) -> float:
    """No-click probability ``(1 - p_d) sum_n (1 - eta_k eta_d)^n p_n``."""
    _require_normalized(dist)
    a = 1.0 - detector.setting(k) * detector.eta_d
    n = np.arange(dist.n_max + 1)
    return float((1.0 - detector.p_d) * np.dot(a ** n, dist.probs))


def click_probability(dist: PhotonDistribution, detector: DetectorParams, k: int) -> float:
    """T_k, the complement of :func:`vacuum_probability`."""
    return 1.0 - vacuum_probability(dist, detector, k)
