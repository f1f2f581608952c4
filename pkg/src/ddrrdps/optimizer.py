"""Per-distance optimization of (mu, v_th) and distance scans.

The search is coordinate-wise: golden-section refinement of log(mu) at fixed
v_th alternates with an exhaustive integer scan of v_th at fixed mu, plus a
ridge step that re-optimizes mu at neighbouring v_th values.  It is
seeded from a coarse log-spaced mu grid (plus the previous optimum when
warm-starting), which keeps it out of the flat negative-rate regions that
dominate near the cutoff distance.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError
from .keyrate import (
    PROTOCOLS,
    KeyRateInputs,
    bb84_decoy_rate,
    k2_rate,
    k3_rate,
    source_tail,
)
from .model import (
    DEFAULT_N_MAX,
    TABLE_ONE_BETA,
    TABLE_ONE_DARK_PER_PULSE,
    TABLE_ONE_E_D,
    TABLE_ONE_F,
    ChannelParams,
    DetectorParams,
    ProtocolParams,
    overall_gain,
    qber,
)
from .photonstats import DEFAULT_SLACK, min_single_photon_gain

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_SEED_POINTS = 24
_LOG_MU_TOL = 1e-10
_BRACKET = math.log(4.0)
_RIDGE_STEPS = (-2, -1, 1, 2)


@dataclass(frozen=True)
class OptimizationSpec:
    protocol: str = "dd-rrdps"
    L: int = 128
    beta: float = TABLE_ONE_BETA
    detector: DetectorParams = field(default_factory=lambda: DetectorParams.table_one(128))
    e_d: float = TABLE_ONE_E_D
    f: float = TABLE_ONE_F
    mu_range: tuple[float, float] = (1e-4, 50.0)
    v_th_range: tuple[int, int] = (1, 100)
    rel_tol: float = 1e-9
    max_iter: int = 100
    n_max: int = DEFAULT_N_MAX
    slack: float = DEFAULT_SLACK

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValidationError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        lo, hi = self.mu_range
        if not 0 < lo <= hi:
            raise ValidationError(f"mu range must satisfy 0 < lo <= hi, got {self.mu_range}")
        vlo, vhi = self.v_th_range
        if not 0 <= vlo <= vhi:
            raise ValidationError(f"v_th range must satisfy 0 <= lo <= hi, got {self.v_th_range}")
        if self.protocol != "bb84-decoy" and self.v_th_bounds()[0] > self.v_th_bounds()[1]:
            raise ValidationError(f"v_th range {self.v_th_range} is empty after capping for L={self.L}")
        if self.rel_tol < 0 or self.max_iter < 1:
            raise ValidationError("rel_tol must be >= 0 and max_iter >= 1")

    @classmethod
    def table_one(cls, protocol: str = "dd-rrdps", L: int = 128,
                  dark_per_pulse: float = TABLE_ONE_DARK_PER_PULSE, **kw) -> "OptimizationSpec":
        """Reference operating parameters; RRDPS trains see ``L`` times the per-pulse dark count."""
        det_kw = {k: kw.pop(k) for k in ("eta_d", "decoy_settings") if k in kw}
        per_train = dark_per_pulse if protocol == "bb84-decoy" else dark_per_pulse * L
        return cls(protocol=protocol, L=L, detector=DetectorParams(p_d=per_train, **det_kw), **kw)

    def v_th_bounds(self) -> tuple[int, int]:
        """Integer v_th range, capped so the privacy-amplification entropy argument stays <= 1/2."""
        lo, hi = self.v_th_range
        if self.protocol == "dd-rrdps":
            hi = min(hi, (self.L - 1) // 2)
        elif self.protocol == "passive-rrdps":
            hi = min(hi, self.L // 4)
        return lo, hi


@dataclass(frozen=True)
class KeyRatePoint:
    distance: float
    mu_opt: float
    v_th_opt: int | None
    q: float
    e_b: float
    g_min: float | None
    e_src: float | None
    rate_per_pulse: float
    protocol_tag: str
    no_positive_rate: bool = False
    iterations: int = 0

    @property
    def rate_clamped(self) -> float:
        return max(0.0, self.rate_per_pulse)


def evaluate(spec: OptimizationSpec, distance: float, mu: float, v_th: int | None) -> KeyRatePoint:
    """Rate and intermediates at fixed parameters (no optimization).

    ``rate_per_pulse`` is ``-inf`` when the worst-case LP is infeasible.
    """
    channel = ChannelParams(spec.beta, distance)
    det = spec.detector
    q = overall_gain(mu, channel, det)
    e_b = qber(mu, channel, det, spec.e_d)
    if spec.protocol == "bb84-decoy":
        rate = bb84_decoy_rate(mu, channel, det, spec.e_d, spec.f)
        return KeyRatePoint(distance, mu, None, q, e_b, None, None, rate, spec.protocol,
                            no_positive_rate=rate <= 0)
    params = ProtocolParams(spec.L, mu, v_th, spec.f, spec.e_d)
    e_src = source_tail(mu, v_th)
    g_min = None
    if spec.protocol == "dd-rrdps":
        try:
            g_min, _ = min_single_photon_gain(mu, channel, det, spec.n_max, spec.slack)
        except InfeasibleError:
            return KeyRatePoint(distance, mu, v_th, q, e_b, None, e_src, -math.inf,
                                spec.protocol, no_positive_rate=True)
        rate = k2_rate(KeyRateInputs(g_min, q, e_b, e_src, params))
    else:
        rate = k3_rate(KeyRateInputs(0.0, q, e_b, e_src, params))
    return KeyRatePoint(distance, mu, v_th, q, e_b, g_min, e_src, rate, spec.protocol,
                        no_positive_rate=rate <= 0)


def _better(a: KeyRatePoint, b: KeyRatePoint | None) -> bool:
    """Higher rate wins; ties go to smaller mu, then smaller v_th."""
    if b is None:
        return True
    if a.rate_per_pulse != b.rate_per_pulse:
        return a.rate_per_pulse > b.rate_per_pulse
    return (a.mu_opt, a.v_th_opt or 0) < (b.mu_opt, b.v_th_opt or 0)


def _best_v_th(spec: OptimizationSpec, distance: float, mu: float) -> KeyRatePoint:
    if spec.protocol == "bb84-decoy":
        return evaluate(spec, distance, mu, None)
    lo, hi = spec.v_th_bounds()
    best = None
    for v in range(lo, hi + 1):
        p = evaluate(spec, distance, mu, v)
        if _better(p, best):
            best = p
    return best


def _golden_max(f: Callable[[float], KeyRatePoint], a: float, b: float,
                incumbent: KeyRatePoint, tol: float) -> KeyRatePoint:
    """Golden-section maximization over log(mu) in [a, b]; never worse than ``incumbent``."""
    best = incumbent
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for p in (fc, fd):
        if _better(p, best):
            best = p
    while b - a > tol:
        if fc.rate_per_pulse >= fd.rate_per_pulse:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            if _better(fc, best):
                best = fc
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            if _better(fd, best):
                best = fd
    return best


def _refine_mu(spec: OptimizationSpec, distance: float, point: KeyRatePoint) -> KeyRatePoint:
    lo, hi = (math.log(x) for x in spec.mu_range)
    f = lambda x: evaluate(spec, distance, math.exp(x), point.v_th_opt)  # noqa: E731
    best = point
    for _ in range(8):
        centre = math.log(best.mu_opt)
        a, b = max(lo, centre - _BRACKET), min(hi, centre + _BRACKET)
        found = _golden_max(f, a, b, best, _LOG_MU_TOL)
        x = math.log(found.mu_opt)
        moved = found is not best
        best = found
        # re-bracket only when the optimum ran into an interior bracket edge
        at_edge = (x - a < 1e-3 and a > lo) or (b - x < 1e-3 and b < hi)
        if not (moved and at_edge):
            break
    return best


def _seed_points(spec: OptimizationSpec, distance: float,
                 start: KeyRatePoint | None) -> KeyRatePoint:
    lo, hi = spec.mu_range
    best = None
    for mu in np.geomspace(lo, hi, _SEED_POINTS):
        p = _best_v_th(spec, distance, float(mu))
        if _better(p, best):
            best = p
    if start is not None:
        mu = min(max(start.mu_opt, lo), hi)
        for p in (_best_v_th(spec, distance, mu),):
            if _better(p, best):
                best = p
    return best


def _ridge_step(spec: OptimizationSpec, distance: float, point: KeyRatePoint) -> KeyRatePoint:
    """Re-optimize mu at neighbouring v_th values.

    The rate has one mu-peak per v_th along a diagonal ridge; a point can be
    optimal in each coordinate separately while a neighbouring v_th with a
    shifted mu is better.
    """
    if point.v_th_opt is None:
        return point
    lo, hi = spec.v_th_bounds()
    best = point
    for step in _RIDGE_STEPS:
        v = point.v_th_opt + step
        if lo <= v <= hi:
            cand = _refine_mu(spec, distance, evaluate(spec, distance, point.mu_opt, v))
            if _better(cand, best):
                best = cand
    return best


def optimize_point(spec: OptimizationSpec, distance: float,
                   start: KeyRatePoint | None = None) -> KeyRatePoint:
    """Best (mu, v_th) found by alternating golden-section and integer scans."""
    if not distance >= 0:
        raise ValidationError(f"distance must be >= 0, got {distance}")
    best = _seed_points(spec, distance, start)
    iterations = 0
    for iterations in range(1, spec.max_iter + 1):
        old = best.rate_per_pulse
        best = _refine_mu(spec, distance, best)
        cand = _best_v_th(spec, distance, best.mu_opt)
        if _better(cand, best):
            best = cand
        best = _ridge_step(spec, distance, best)
        gain = best.rate_per_pulse - old
        if not math.isfinite(old) or gain > spec.rel_tol * abs(old):
            continue
        break
    return replace(best, iterations=iterations, no_positive_rate=not best.rate_per_pulse > 0)


def _grid(d_min: float, d_max: float, d_step: float) -> list[float]:
    if not (0 <= d_min and d_step > 0 and math.isfinite(d_max)):
        raise ValidationError(f"invalid grid d_min={d_min}, d_max={d_max}, d_step={d_step}")
    if d_min > d_max:
        raise ValidationError(f"empty distance grid: d_min={d_min} > d_max={d_max}")
    n = int(math.floor((d_max - d_min) / d_step + 1e-9)) + 1
    return [round(d_min + i * d_step, 9) for i in range(n)]


def scan_distances(spec: OptimizationSpec, d_min: float, d_max: float, d_step: float,
                   warm_start: bool = True, workers: int = 1) -> list[KeyRatePoint]:
    """One optimized point per grid distance, in ascending order.

    Warm-started scans run sequentially; with ``warm_start=False`` the points
    are independent and may be spread over ``workers`` processes.
    """
    grid = _grid(d_min, d_max, d_step)
    if not warm_start:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(optimize_point, [spec] * len(grid), grid))
        return [optimize_point(spec, d) for d in grid]
    points: list[KeyRatePoint] = []
    prev = None
    for d in grid:
        prev = optimize_point(spec, d, start=prev)
        points.append(prev)
    return points


def cutoff_distance(points: Sequence[KeyRatePoint]) -> float:
    """Largest scanned distance with a positive clamped rate (0 if none)."""
    if not points:
        raise ValidationError("empty scan")
    positive = [p.distance for p in points if p.rate_clamped > 0]
    return max(positive) if positive else 0.0
