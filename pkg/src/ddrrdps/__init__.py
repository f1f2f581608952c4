"""Key-rate engine for detector-decoy round-robin DPS quantum key distribution."""
from __future__ import annotations

from .config import RunConfig
from .keyrate import binary_entropy, bb84_decoy_rate, k1_length, k2_rate, k3_rate, source_tail
from .model import ChannelParams, DetectorParams, PhotonDistribution, ProtocolParams
from .optimizer import OptimizationSpec, optimize_point, scan_distances
from .photonstats import min_single_photon_gain

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "DetectorParams", "OptimizationSpec", "PhotonDistribution",
    "ProtocolParams", "RunConfig", "bb84_decoy_rate", "binary_entropy", "k1_length",
    "k2_rate", "k3_rate", "min_single_photon_gain", "optimize_point", "scan_distances",
    "source_tail",
]
