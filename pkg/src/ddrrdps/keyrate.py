"""Secure key-rate formulas.

Rates are returned raw and signed; callers clamp with ``max(0, r)`` only
when reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import pdtrc

from .errors import DegenerateError, DomainError
from .model import ChannelParams, DetectorParams, ProtocolParams, transmittance

PROTOCOLS = ("dd-rrdps", "passive-rrdps", "bb84-decoy")


def binary_entropy(x: float) -> float:
    """Shannon entropy of a biased coin in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    # log1p keeps the (1-x) term accurate for tiny x
    return -x * math.log2(x) - (1.0 - x) * math.log1p(-x) / math.log(2.0)


def source_tail(mu: float, v_th: int) -> float:
    """Probability that a Poisson(mu) train carries more than ``v_th`` photons."""
    if not mu >= 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    if int(v_th) != v_th or v_th < 0:
        raise DomainError(f"v_th must be a non-negative integer, got {v_th}")
    if mu == 0:
        return 0.0
    # regularized upper incomplete gamma; no 1 - CDF cancellation
    return float(pdtrc(int(v_th), mu))


@dataclass(frozen=True)
class KeyRateInputs:
    g_min: float
    q: float
    e_b: float
    e_src: float
    protocol: ProtocolParams

    def __post_init__(self) -> None:
        for name in ("g_min", "q", "e_b", "e_src"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")


def _rrdps_rate(detected: float, inputs: KeyRateInputs, pa_argument: float) -> float:
    p = inputs.protocol
    ec = inputs.q * p.f * binary_entropy(inputs.e_b)
    pa = inputs.e_src + (detected - inputs.e_src) * binary_entropy(pa_argument)
    return (detected - ec - pa) / p.L


def k2_rate(inputs: KeyRateInputs) -> float:
    """Detector-decoy RRDPS key rate per pulse, using the worst-case G_min."""
    p = inputs.protocol
    if p.v_th > p.L - 1:
        raise DomainError(f"v_th={p.v_th} exceeds L-1={p.L - 1}")
    return _rrdps_rate(inputs.g_min, inputs, p.v_th / (p.L - 1))


def k3_rate(inputs: KeyRateInputs) -> float:
    """Passive-delay RRDPS comparator key rate per pulse (G_min unused)."""
    p = inputs.protocol
    if 2 * p.v_th > p.L:
        raise DomainError(f"2*v_th={2 * p.v_th} exceeds L={p.L}")
    return _rrdps_rate(inputs.q, inputs, 2 * p.v_th / p.L)


def k1_length(n_sifted: float, e_b: float, e_ph: float, f: float) -> float:
    """Asymptotic secure length ``N (1 - f h(e_b) - h(e_ph))``; may be negative."""
    if n_sifted < 0:
        raise DomainError(f"sifted length must be >= 0, got {n_sifted}")
    return n_sifted * (1.0 - f * binary_entropy(e_b) - binary_entropy(e_ph))


def bb84_decoy_rate(mu: float, channel: ChannelParams, detector: DetectorParams,
                    e_d: float, f: float) -> float:
    """Asymptotic decoy-state BB84 rate per pulse with infinitely many decoys.

    ``detector.p_d`` is the per-pulse background yield Y_0; dark clicks err
    with probability 1/2 and the 1/2 prefactor is basis sifting.
    """
    if not mu >= 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    eta = transmittance(channel) * detector.eta_d
    y0 = detector.p_d
    signal = -math.expm1(-eta * mu)
    q_mu = y0 + signal
    if q_mu <= 0.0:
        raise DegenerateError("BB84 gain is zero; rate undefined")
    e_mu = (0.5 * y0 + e_d * signal) / q_mu
    y1 = eta + y0
    e1 = (0.5 * y0 + e_d * eta) / y1
    q1 = mu * math.exp(-mu) * y1
    return 0.5 * (-q_mu * f * binary_entropy(e_mu) + q1 * (1.0 - binary_entropy(e1)))

