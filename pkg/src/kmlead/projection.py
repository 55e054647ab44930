"""Design-stage summaries of predictive ensembles: pointwise OS tables
with credible intervals, median-OS distributions and differences,
probability of clinically meaningful benefit, and fan-plot data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthesis import PredictiveEnsemble

NOT_REACHED = float("nan")


@dataclass(frozen=True)
class SurvivalSummary:
    times: np.ndarray
    estimate: np.ndarray  # ensemble mean
    lower: np.ndarray  # pointwise 2.5th percentile
    upper: np.ndarray  # pointwise 97.5th percentile


@dataclass(frozen=True)
class ArmComparison:
    delta_os: SurvivalSummary  # pointwise b - a
    median_a: tuple[float, float, float]  # (estimate, lo, hi)
    median_b: tuple[float, float, float]
    delta_median: tuple[float, float, float]
    prob_benefit: float
    margin: float
    n_not_reached: int


def _values_at(ens: PredictiveEnsemble, times):
    """Per-draw curve values at arbitrary times by linear interpolation,
    with the implicit (0, 1) start point included."""
    grid = np.concatenate(([0.0], np.asarray(ens.grid.times)))
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > grid[-1] + 1e-9):
        raise ValueError(f"requested times outside [0, {grid[-1]}]")
    curves = np.concatenate([np.ones((len(ens.curves), 1)), ens.curves], axis=1)
    idx = np.clip(np.searchsorted(grid, times, side="right") - 1, 0, len(grid) - 2)
    t0, t1 = grid[idx], grid[idx + 1]
    w = np.where(t1 > t0, (times - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
    return (1 - w) * curves[:, idx] + w * curves[:, idx + 1]


def summarize(ens: PredictiveEnsemble, times) -> SurvivalSummary:
    """Ensemble mean and pointwise 2.5/97.5 percentiles at the given times."""
    vals = _values_at(ens, times)
    return SurvivalSummary(
        np.asarray(times, dtype=float),
        vals.mean(axis=0),
        np.percentile(vals, 2.5, axis=0),
        np.percentile(vals, 97.5, axis=0),
    )


def median_os(times, survival) -> float:
    """First crossing of 0.5 with linear interpolation; NaN if the curve
    never reaches 0.5."""
    t = np.concatenate(([0.0], np.asarray(times, dtype=float)))
    s = np.concatenate(([1.0], np.asarray(survival, dtype=float)))
    below = np.flatnonzero(s <= 0.5)
    if len(below) == 0:
        return NOT_REACHED
    i = below[0]
    if s[i] == 0.5 or i == 0:
        return float(t[i])
    s0, s1 = s[i - 1], s[i]
    return float(t[i - 1] + (t[i] - t[i - 1]) * (s0 - 0.5) / (s0 - s1))


def ensemble_medians(ens: PredictiveEnsemble) -> np.ndarray:
    t = np.asarray(ens.grid.times)
    return np.array([median_os(t, c) for c in ens.curves])


def _median_ci(medians):
    ok = medians[~np.isnan(medians)]
    if len(ok) == 0:
        return (NOT_REACHED, NOT_REACHED, NOT_REACHED)
    return (float(np.mean(ok)), float(np.percentile(ok, 2.5)),
            float(np.percentile(ok, 97.5)))


def compare(a: PredictiveEnsemble, b: PredictiveEnsemble, margin=3.0,
            times=None, pairing="index", seed=0) -> ArmComparison:
    """Paired comparison of two independently generated ensembles.

    Draw i of a pairs with draw i of b ("index") or with a shuffled b
    ("shuffle", to verify pairing insensitivity). Pairs where either
    median is not reached are excluded from the delta-median distribution
    and counted; prob_benefit divides by the full M regardless.
    """
    if a.grid.times != b.grid.times:
        raise ValueError("ensembles are on different grids")
    if len(a.curves) != len(b.curves):
        raise ValueError("ensembles must have the same number of draws")
    M = len(a.curves)
    if pairing == "shuffle":
        perm = np.random.default_rng(seed).permutation(M)
        b = PredictiveEnsemble(b.grid, b.curves[perm], b.hazards[perm])
    elif pairing != "index":
        raise ValueError(f"unknown pairing {pairing!r}")

    if times is None:
        times = np.asarray(a.grid.times)
    va = _values_at(a, times)
    vb = _values_at(b, times)
    delta = vb - va
    delta_os = SurvivalSummary(
        np.asarray(times, dtype=float), delta.mean(axis=0),
        np.percentile(delta, 2.5, axis=0), np.percentile(delta, 97.5, axis=0))

    med_a = ensemble_medians(a)
    med_b = ensemble_medians(b)
    both = ~(np.isnan(med_a) | np.isnan(med_b))
    delta_med = med_b[both] - med_a[both]
    n_nr = int(M - both.sum())
    # float-safe at the boundary: an exact grid shift of `margin` months
    # produces deltas equal to margin up to rounding noise
    prob = float(np.sum(delta_med >= margin - 1e-9) / M)

    return ArmComparison(
        delta_os,
        _median_ci(med_a),
        _median_ci(med_b),
        _median_ci(delta_med) if len(delta_med) else (NOT_REACHED,) * 3,
        prob, float(margin), n_nr)


def fan_plot_data(ens: PredictiveEnsemble, published_curves=None, max_draws=200):
    """Long-form (draw_id, t, survival) rows, thinned to at most max_draws
    evenly spaced draws, plus overlay rows for any published curves."""
    M = len(ens.curves)
    if M > max_draws:
        keep = np.linspace(0, M - 1, max_draws).round().astype(int)
        keep = np.unique(keep)
    else:
        keep = np.arange(M)
    t = np.asarray(ens.grid.times)
    rows = []
    for i in keep:
        for tk, s in zip(t, ens.curves[i]):
            rows.append((f"draw:{i}", float(tk), float(s)))
    for c in published_curves or []:
        tag = f"published:{c.study.render()}/{c.arm_label}"
        for tk, s in zip(c.times, c.survival):
            rows.append((tag, float(tk), float(s)))
    return rows
