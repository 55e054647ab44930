"""Shared fixtures: the published five-trial baseline table and small
simulation helpers used across test modules."""

import numpy as np
import pytest

from kmlead import (
    BaselineProfile,
    CovariateSummary,
    KMCurve,
    ReconstructedIPD,
    StudyId,
    km_estimator,
    number_at_risk,
)

COVARIATES = ["age", "female", "ecog0", "squamous", "never_smoker", "pdl1_ge1"]


def make_profile(sid, arm, n, age, female, ecog0, squam, never, pdl1):
    covs = (
        CovariateSummary("age", "continuous_median_range", age),
        CovariateSummary("female", "binary_proportion", (female,)),
        CovariateSummary("ecog0", "binary_proportion", (ecog0,)),
        CovariateSummary("squamous", "binary_proportion", (squam,)),
        CovariateSummary("never_smoker", "binary_proportion", (never,)),
        CovariateSummary("pdl1_ge1", "binary_proportion", (pdl1,)),
    )
    return BaselineProfile(StudyId(sid), arm, n, covs)


@pytest.fixture(scope="session")
def published_profiles():
    """Per-arm baseline summaries of the five historical NSCLC trials."""
    return [
        make_profile("CheckMate-9LA", "nivolumab + ipilimumab + chemotherapy",
                     361, (65, 59, 70), 0.30, 0.31, 0.31, 0.13, 0.60),
        make_profile("CheckMate-227", "nivolumab + ipilimumab",
                     583, (64, 26, 87), 0.326, 0.35, 0.28, 0.136, 0.679),
        make_profile("POSEIDON", "tremelimumab + durvalumab + chemotherapy",
                     338, (63, 27, 87), 0.204, 0.325, 0.367, 0.175, 0.63),
        make_profile("POSEIDON", "durvalumab + chemotherapy",
                     338, (64.5, 32, 87), 0.251, 0.322, 0.379, 0.249, 0.663),
        make_profile("KEYNOTE-189", "pembrolizumab + chemotherapy",
                     410, (65, 34, 84), 0.38, 0.454, 0.0, 0.117, 0.634),
        make_profile("KEYNOTE-407", "pembrolizumab + chemotherapy",
                     278, (65, 29, 87), 0.209, 0.263, 0.975, 0.079, 0.633),
    ]


def simulate_trial(n, lam, kappa, seed, cens_lo=24.0, cens_hi=60.0,
                   study="SIM", arm="arm"):
    """Weibull event times with uniform administrative censoring."""
    rng = np.random.default_rng(seed)
    T = rng.weibull(kappa, n) / lam ** (1 / kappa)
    C = rng.uniform(cens_lo, cens_hi, n)
    Y = np.minimum(T, C)
    E = (T <= C).astype(int)
    return ReconstructedIPD(StudyId(study), arm, Y, E)


def publish(ipd, grid_step=6.0, t_max=60.0, points=500):
    """Turn simulated records into the published artifacts: a 500-point
    curve and at-risk counts on an even grid."""
    est = km_estimator(ipd)
    grid = tuple(np.arange(0.0, t_max + grid_step / 2, grid_step))
    counts = tuple(int(x) for x in number_at_risk(ipd, grid))
    times = np.linspace(0.0, t_max, points)
    curve = KMCurve(ipd.study, ipd.arm_label, times, est.evaluate(times))
    return curve, grid, counts
