"""Detector-decoy photon statistics.

The observed click rates ``Q_k`` at Bob's attenuator settings constrain the
photon-number distribution arriving at his detector.  The worst case for the
single-photon detection probability

    G(p) = sum_n n eta_d (1 - eta_d)^(n-1) p_n

over every distribution consistent with those rates is a small LP.
"""
from __future__ import annotations

import functools
import math
import warnings
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, SolverError, ValidationError
from .lp import Constraint, LpProblem, LpSolution, solve_lp
from .model import (
    DEFAULT_N_MAX,
    ChannelParams,
    DetectorParams,
    PhotonDistribution,
    decoy_gain,
)

DEFAULT_SLACK = 1e-9


class DegenerateObjectiveWarning(UserWarning):
    """Detector efficiency is zero, so every single-photon coefficient vanishes."""


def g_objective(detector: DetectorParams, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Coefficients ``n eta_d (1 - eta_d)^(n-1)``; the vacuum entry is exactly 0."""
    eta = detector.eta_d
    if eta == 0.0:
        warnings.warn("eta_d = 0: single-photon objective is identically zero",
                      DegenerateObjectiveWarning, stacklevel=2)
        return np.zeros(n_max + 1)
    n = np.arange(1, n_max + 1)
    return np.concatenate([[0.0], n * eta * (1.0 - eta) ** (n - 1)])


def single_photon_probability(dist: PhotonDistribution, detector: DetectorParams) -> float:
    """G evaluated on a given distribution."""
    return float(np.dot(g_objective(detector, dist.n_max), dist.probs))


def click_row(detector: DetectorParams, k: int, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Coefficients of T_k as a linear form on the probability simplex.

    ``T_k = 1 - (1-p_d) sum a^n p_n`` equals ``sum (1 - (1-p_d) a^n) p_n`` once
    ``sum p_n = 1``; the latter keeps small click probabilities accurate.
    """
    a = detector.setting(k) * detector.eta_d
    n = np.arange(n_max + 1)
    with np.errstate(invalid="ignore"):
        log_keep = math.log1p(-detector.p_d) + n * (math.log1p(-a) if a < 1 else -np.inf)
    row = -np.expm1(log_keep)
    row[0] = detector.p_d
    return row


def build_constraints(observed_gains: Sequence[float], detector: DetectorParams,
                      mu_context: float | None = None, n_max: int = DEFAULT_N_MAX,
                      slack: float = DEFAULT_SLACK) -> LpProblem:
    """LP: minimize G subject to ``|T_k(p) - Q_k| <= slack`` for every setting.

    With ``slack == 0`` each setting contributes one equality row instead of
    the two-sided pair.  ``mu_context`` only labels the rows.
    """
    gains = [float(q) for q in observed_gains]
    if len(gains) != len(detector.decoy_settings):
        raise ValidationError(
            f"{len(gains)} observed gains for {len(detector.decoy_settings)} decoy settings")
    if not slack >= 0:
        raise ValidationError(f"slack must be >= 0, got {slack}")
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    tag = "" if mu_context is None else f"@mu={mu_context:.6g}"
    rows = [Constraint(np.ones(n_max + 1), "=", 1.0, "norm")]
    for k, q in enumerate(gains):
        coeffs = click_row(detector, k, n_max)
        if slack == 0.0:
            rows.append(Constraint(coeffs, "=", q, f"T{k + 1}{tag}"))
        else:
            rows.append(Constraint(coeffs, "<=", q + slack, f"T{k + 1}_hi{tag}"))
            rows.append(Constraint(coeffs, ">=", q - slack, f"T{k + 1}_lo{tag}"))
    objective = np.zeros(n_max + 1) if detector.eta_d == 0 else g_objective(detector, n_max)
    return LpProblem(objective, tuple(rows))


def observed_gains(mu: float, channel: ChannelParams, detector: DetectorParams) -> list[float]:
    """Analytic Q_k for every decoy setting."""
    return [decoy_gain(mu, channel, detector, k) for k in range(len(detector.decoy_settings))]


def worst_case_solution(mu: float, channel: ChannelParams, detector: DetectorParams,
                        n_max: int = DEFAULT_N_MAX, slack: float = DEFAULT_SLACK) -> LpSolution:
    problem = build_constraints(observed_gains(mu, channel, detector), detector,
                                mu_context=mu, n_max=n_max, slack=slack)
    return solve_lp(problem)


def min_single_photon_gain(mu: float, channel: ChannelParams, detector: DetectorParams,
                           n_max: int = DEFAULT_N_MAX, slack: float = DEFAULT_SLACK,
                           ) -> tuple[float, PhotonDistribution | None]:
    """Worst-case G and the extremal arrival distribution.

    For ``eta_d == 0`` returns ``(0.0, None)`` with a
    :class:`DegenerateObjectiveWarning` and no solve.
    """
    if detector.eta_d == 0.0:
        warnings.warn("eta_d = 0: G_min is 0 without solving",
                      DegenerateObjectiveWarning, stacklevel=2)
        return 0.0, None
    g, x = _cached_g_min(mu, channel, detector, n_max, slack)
    return g, PhotonDistribution(x)


@functools.lru_cache(maxsize=65536)
def _cached_g_min(mu, channel, detector, n_max, slack):
    sol = worst_case_solution(mu, channel, detector, n_max, slack)
    if sol.status == "infeasible":
        raise InfeasibleError(
            f"no distribution with n <= {n_max} reproduces the click rates "
            f"(mu={mu}, d={channel.distance}, slack={slack}): {sol.message}")
    if not sol.optimal:
        raise SolverError(f"unexpected LP status {sol.status}")
    x = sol.x.copy()
    x.setflags(write=False)
    return sol.value, x
