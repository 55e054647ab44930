"""Individual patient data reconstruction from a standardized KM curve and
its risk-table row, plus the shared analysis grid and event tabulation.

Reconstruction inverts the product-limit estimator interval by interval:
within each risk-table interval, event counts follow from the KM drops and
censorings are spread uniformly and adjusted until the next at-risk count
is met exactly. After the last risk-table time the remaining drops become
events and survivors are censored at the curve end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KmleadError, KMCurve, ReconstructedIPD, StudyId


class ReconstructionError(KmleadError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing analysis times t_1..t_K with t_1 > 0."""

    times: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) == 0 or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing and positive")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @property
    def K(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class EventTable:
    """Event and at-risk counts for one arm on the shared grid."""

    arm_id: tuple[str, str]  # (rendered study id, arm label)
    d: tuple[int, ...]
    r: tuple[int, ...]

    def __post_init__(self):
        if len(self.d) != len(self.r):
            raise ValueError("d and r must have equal length")
        d = np.asarray(self.d)
        r = np.asarray(self.r)
        if np.any(d < 0) or np.any(d > r):
            raise ValueError("need 0 <= d_k <= r_k")
        if np.any(r[1:] > (r - d)[:-1]):
            raise ValueError("at-risk counts exceed survivors of previous interval")

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(int(r - d) for r, d in zip(self.r, self.d))


@dataclass(frozen=True)
class KMEstimate:
    """Right-continuous product-limit step function starting at 1."""

    times: np.ndarray  # distinct observed times, increasing
    survival: np.ndarray  # value on [times[i], times[i+1])
    at_risk: np.ndarray

    def evaluate(self, t):
        """Step-function value at times t (right-continuous)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)
        return out


def km_estimator(ipd: ReconstructedIPD) -> KMEstimate:
    """Product-limit estimate; records censored exactly at an event time
    count as at risk for that event."""
    if ipd.n < 1:
        raise ValueError("need at least one record")
    order = np.lexsort((1 - ipd.events, ipd.times))
    times = ipd.times[order]
    events = ipd.events[order]

    uniq = np.unique(times)
    s = 1.0
    out_t, out_s, out_r = [], [], []
    for t in uniq:
        at_risk = int(np.sum(times >= t))
        d = int(np.sum((times == t) & (events == 1)))
        if d > 0:
            s *= 1.0 - d / at_risk
        out_t.append(t)
        out_s.append(s)
        out_r.append(at_risk)
    return KMEstimate(np.array(out_t), np.array(out_s), np.array(out_r))


def reconstruct_ipd(curve: KMCurve, risk_row) -> ReconstructedIPD:
    """Recover per-patient (time, event) records from a 500-point curve and
    the arm's (time_grid, counts) risk-table row.

    Postconditions: the output has exactly counts[0] records, its KM
    estimate stays within 0.02 of the input curve in sup norm, and its
    at-risk counts reproduce the risk row exactly.
    """
    grid, counts = risk_row
    grid = np.asarray(grid, dtype=float)
    counts = np.asarray(counts, dtype=int)
    if counts[0] <= 0:
        raise ReconstructionError("first at-risk count must be positive")

    t = np.asarray(curve.times, dtype=float)
    S = np.asarray(curve.survival, dtype=float)
    nk = len(t)

    # curve index ranges per risk interval: interval i covers
    # [grid[i], grid[i+1]); the final pseudo-interval runs to the curve end
    bounds = list(grid) + [np.inf]
    lower = [int(np.searchsorted(t, bounds[i], side="left")) for i in range(len(grid))]
    lower.append(nk)

    d = np.zeros(nk, dtype=int)  # events at curve time t[k]
    cens_times: list[float] = []

    n_current = int(counts[0])
    km_prev = 1.0  # running reconstructed KM value
    s_prev_idx = 0  # curve index of the last processed point

    def process_interval(i, n_start, n_target):
        """Events and censorings inside interval i given the at-risk target
        at the next grid time (None for the terminal segment)."""
        nonlocal km_prev
        lo, hi = lower[i], lower[i + 1]
        idx = list(range(max(lo, 1), hi))
        if not idx:
            if n_target is not None and n_target > n_start:
                raise ReconstructionError(
                    f"at-risk count rises from {n_start} to {n_target} "
                    f"in interval starting at {grid[i]:.4g}")
            n_cens = 0 if n_target is None else n_start - n_target
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int), n_cens

        def run(n_cens):
            # distribute censorings uniformly over the interval's curve steps
            if n_cens > 0:
                pos = np.floor(np.arange(n_cens) * len(idx) / n_cens).astype(int)
                c_per = np.bincount(pos, minlength=len(idx))
            else:
                c_per = np.zeros(len(idx), dtype=int)
            km = km_prev
            n = n_start
            dloc = np.zeros(len(idx), dtype=int)
            for j, k in enumerate(idx):
                if n > 0 and km > 0:
                    dloc[j] = int(round(n * (1.0 - S[k] / km)))
                    dloc[j] = max(0, min(dloc[j], n))
                    if dloc[j] > 0:
                        km *= 1.0 - dloc[j] / n
                n -= dloc[j] + c_per[j]
                if n < 0:
                    return dloc, c_per, n, km
            return dloc, c_per, n, km

        if n_target is None:
            dloc, c_per, n_end, km_end = run(0)
            if n_end < 0:
                raise ReconstructionError(
                    f"curve drops below what at-risk counts permit after {grid[i]:.4g}")
            km_prev = km_end
            return dloc, c_per, 0

        # several (events, censorings) splits can reconcile the at-risk
        # target; scan all censoring counts and keep the split whose
        # reconstructed KM best matches the curve at the interval end,
        # preferring exact at-risk agreement
        def km_of(dloc, c_per):
            km = km_prev
            n = n_start
            for j in range(len(idx)):
                if dloc[j] > 0 and n > 0:
                    km *= 1.0 - dloc[j] / n
                n -= dloc[j] + c_per[j]
            return km, n

        s_end = S[hi - 1]
        best = None
        for n_cens in range(0, n_start - n_target + 1):
            dloc, c_per, n_end, km_end = run(n_cens)
            gap = n_end - n_target
            err = abs(km_end - s_end)
            key = (abs(gap), err)
            if best is None or key < best[0]:
                best = (key, dloc, c_per, gap)
        if best is None:
            raise ReconstructionError(
                f"infeasible interval [{grid[i]:.4g}, {bounds[i + 1]:.4g}): "
                "curve drops below what the at-risk counts permit")
        _, dloc, c_per, gap = best
        if gap > 0:
            # leftovers the rounded events never claimed: censor them at the
            # end of the interval
            c_per[-1] += gap
        elif gap < 0:
            # rounded events overshot the at-risk budget: drop the latest ones
            need = -gap
            for j in range(len(dloc) - 1, -1, -1):
                take = min(need, int(dloc[j]))
                dloc[j] -= take
                need -= take
                if need == 0:
                    break
            if need > 0:
                raise ReconstructionError(
                    f"infeasible interval [{grid[i]:.4g}, {bounds[i + 1]:.4g}): "
                    "curve drops below what the at-risk counts permit")
        km_end, n_end = km_of(dloc, c_per)
        if n_end != n_target:
            raise ReconstructionError(
                f"infeasible interval [{grid[i]:.4g}, {bounds[i + 1]:.4g}): "
                "curve drops below what the at-risk counts permit")
        km_prev = km_end
        return dloc, c_per, int(c_per.sum())

    for i in range(len(grid)):
        target = int(counts[i + 1]) if i + 1 < len(grid) else None
        lo, hi = lower[i], lower[i + 1]
        idx = list(range(max(lo, 1), hi))
        dloc, c_per, n_cens = process_interval(i, n_current, target)
        for j, k in enumerate(idx):
            d[k] += int(dloc[j])
        # censorings booked at step k happen after the event at t[k]; place
        # them strictly inside (t[k], next bound) so at-risk counts at both
        # curve and grid times come out exact
        for j, k in enumerate(idx):
            c = int(c_per[j])
            if c > 0:
                left = t[k]
                right = t[k + 1] if k + 1 < nk else bounds[i + 1]
                if np.isfinite(bounds[i + 1]):
                    right = min(right, bounds[i + 1])
                for q in range(c):
                    cens_times.append(left + (right - left) * (q + 1) / (c + 1))
        if not idx and target is not None and n_cens > 0:
            # no curve steps in this interval: censor between the grid times
            left, right = grid[i], grid[i + 1]
            for q in range(n_cens):
                cens_times.append(left + (right - left) * (q + 1) / (n_cens + 1))
        if target is not None:
            n_current = target

    # survivors after the terminal segment are censored at the curve end
    n_left = int(counts[0]) - int(d.sum()) - len(cens_times)
    if n_left < 0:
        raise ReconstructionError("internal accounting error: negative survivors")

    times_out = []
    events_out = []
    for k in np.flatnonzero(d):
        times_out.extend([t[k]] * int(d[k]))
        events_out.extend([1] * int(d[k]))
    times_out.extend(cens_times)
    events_out.extend([0] * len(cens_times))
    times_out.extend([t[-1]] * n_left)
    events_out.extend([0] * n_left)

    return ReconstructedIPD(curve.study, curve.arm_label,
                            np.array(times_out), np.array(events_out))


def number_at_risk(ipd: ReconstructedIPD, times):
    """#{i : Y_i >= t} for each requested time."""
    y = np.sort(ipd.times)
    times = np.asarray(times, dtype=float)
    return (len(y) - np.searchsorted(y, times, side="left")).astype(int)


def choose_grid(risk_tables) -> TimeGrid:
    """Pick the analysis grid: the contributing grid with the smallest
    spacing, extended at its own spacing to the maximum follow-up."""
    if not risk_tables:
        raise ValueError("need at least one risk table")
    best = None
    best_step = np.inf
    t_max = 0.0
    for rt in risk_tables:
        g = np.asarray(rt.time_grid, dtype=float)
        t_max = max(t_max, float(g[-1]))
        if len(g) < 2:
            continue
        step = float(np.min(np.diff(g)))
        if step < best_step:
            best_step = step
            best = g
    if best is None:
        raise ValueError("no grid with at least two time points")
    times = [float(x) for x in best if x > 0]
    while times[-1] < t_max - 1e-9:
        times.append(times[-1] + best_step)
    return TimeGrid(tuple(times))


def discretize(ipd: ReconstructedIPD, grid: TimeGrid) -> ReconstructedIPD:
    """Snap each followup time up to the smallest grid time >= Y_i; times
    beyond the grid end become censorings at t_K."""
    t = np.asarray(grid.times)
    idx = np.searchsorted(t, ipd.times, side="left")
    beyond = idx >= len(t)
    idx = np.minimum(idx, len(t) - 1)
    new_times = t[idx]
    new_events = np.where(beyond, 0, ipd.events)
    return ReconstructedIPD(ipd.study, ipd.arm_label, new_times, new_events)


def tabulate_events(ipd: ReconstructedIPD, grid: TimeGrid) -> EventTable:
    """Count events and patients at risk at each grid time. Records
    censored exactly at t_k count as at risk at t_k."""
    t = np.asarray(grid.times)
    on_grid = np.isin(ipd.times, t)
    if not np.all(on_grid):
        raise KmleadError("IPD contains off-grid times; discretize first")
    r = [int(np.sum(ipd.times >= tk)) for tk in t]
    d = [int(np.sum((ipd.times == tk) & (ipd.events == 1))) for tk in t]
    return EventTable((ipd.study.render(), ipd.arm_label), tuple(d), tuple(r))
