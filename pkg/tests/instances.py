"""Random LP instances built from known ground-truth arrival distributions."""
from __future__ import annotations

import numpy as np

from ddrrdps.model import DetectorParams, PhotonDistribution, click_probability
from ddrrdps.photonstats import build_constraints

SLACKS = (0.0, 1e-9, 1e-6, 1e-3)


def random_detector(rng: np.random.Generator, n_settings: int = 3) -> DetectorParams:
    # consecutive settings differ by at least 5% so equality rows are not
    # nearly collinear (that only tests floating-point conditioning)
    settings = [rng.uniform(0.6, 1.0)]
    for _ in range(n_settings - 1):
        settings.append(settings[-1] * rng.uniform(0.5, 0.95))
    settings = tuple(settings)
    return DetectorParams(eta_d=rng.uniform(0.1, 0.9), p_d=10 ** rng.uniform(-9, -2),
                          decoy_settings=settings)


def random_truth(rng: np.random.Generator, n_max: int, poisson: bool) -> PhotonDistribution:
    if poisson:
        return PhotonDistribution.poisson(10 ** rng.uniform(-4, 0.5), n_max)
    return PhotonDistribution(rng.dirichlet(np.ones(n_max + 1)))


def random_instance(trial: int, rng: np.random.Generator):
    """(problem, detector, truth, slack); feasible by construction since truth satisfies it."""
    n_max = int(rng.integers(3, 11))
    det = random_detector(rng)
    truth = random_truth(rng, n_max, poisson=trial % 2 == 0)
    gains = [click_probability(truth, det, k) for k in range(len(det.decoy_settings))]
    slack = SLACKS[trial % len(SLACKS)]
    return build_constraints(gains, det, n_max=n_max, slack=slack), det, truth, slack
