"""Standardized-difference dissimilarities between trial baseline profiles,
PAM clustering over the resulting matrix, and effect-size banding.

The continuous standardized difference is |mean_j - mean_k| over the
pooled SD sqrt((var_j + var_k)/2); the binary version replaces the
variances by p(1-p). Median/range summaries are converted with
mean = median and sd = (max - min)/4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BaselineProfile, CovariateSummary, KmleadError, StudyId

# cap for standardized differences whose pooled variance is zero while the
# values differ
UNBOUNDED_CAP = 10.0


class SimilarityError(KmleadError):
    pass


@dataclass(frozen=True)
class DissimilarityMatrix:
    labels: tuple[str, ...]
    D: np.ndarray
    mode: str  # "average" | "maximum"
    covariate_set: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        self.D.setflags(write=False)

    def value(self, a: str, b: str) -> float:
        i, j = self.labels.index(a), self.labels.index(b)
        return float(self.D[i, j])


@dataclass(frozen=True)
class ClusteringResult:
    k: int
    medoids: tuple[str, ...]
    assignment: dict
    mean_silhouette: float
    degenerate: bool = False

    def clusters(self):
        out: dict[str, list] = {m: [] for m in self.medoids}
        for label, m in self.assignment.items():
            out[m].append(label)
        return out


def approx_moments(median, mn, mx):
    """Approximate (mean, sd) from a published median and range."""
    if mx < mn or not (mn <= median <= mx):
        raise ValueError("need min <= median <= max")
    return float(median), (mx - mn) / 4.0


def std_diff_continuous(mean_j, var_j, mean_k, var_k):
    if var_j < 0 or var_k < 0:
        raise ValueError("variances must be non-negative")
    num = abs(mean_j - mean_k)
    if num == 0:
        return 0.0
    denom = np.sqrt((var_j + var_k) / 2.0)
    if denom == 0:
        return UNBOUNDED_CAP
    return float(num / denom)


def std_diff_binary(p_j, p_k):
    for p in (p_j, p_k):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"proportion {p} outside [0, 1]")
    num = abs(p_j - p_k)
    if num == 0:
        return 0.0
    denom = np.sqrt((p_j * (1 - p_j) + p_k * (1 - p_k)) / 2.0)
    if denom == 0:
        return UNBOUNDED_CAP
    return float(num / denom)


def _as_moments(cov: CovariateSummary):
    if cov.kind == "continuous_mean_sd":
        mean, sd = cov.values
        return mean, sd * sd
    if cov.kind == "continuous_median_range":
        mean, sd = approx_moments(*cov.values)
        return mean, sd * sd
    raise SimilarityError(f"{cov.name}: not a continuous covariate")


def covariate_diff(a: CovariateSummary, b: CovariateSummary) -> float:
    binary = (a.kind == "binary_proportion", b.kind == "binary_proportion")
    if binary[0] != binary[1]:
        raise SimilarityError(
            f"{a.name}: incompatible kinds {a.kind} vs {b.kind}")
    if binary[0]:
        return std_diff_binary(a.values[0], b.values[0])
    ma, va = _as_moments(a)
    mb, vb = _as_moments(b)
    return std_diff_continuous(ma, va, mb, vb)


def profile_dissimilarity(a: BaselineProfile, b: BaselineProfile,
                          covariates, mode="average") -> float:
    if mode not in ("average", "maximum"):
        raise ValueError(f"unknown mode {mode!r}")
    ds = []
    for name in covariates:
        try:
            ca, cb = a.covariate(name), b.covariate(name)
        except KeyError:
            raise SimilarityError(
                f"covariate {name!r} missing from {a.study.render()} or {b.study.render()}"
            ) from None
        ds.append(covariate_diff(ca, cb))
    if mode == "average":
        return float(np.mean(ds))
    return float(np.max(ds))


def pool_profiles(profiles, label=None) -> BaselineProfile:
    """n-weighted pooled profile across the arms of one trial.

    Continuous summaries pool as a mixture (between-arm spread enters the
    pooled variance); proportions pool as weighted averages.
    """
    if not profiles:
        raise ValueError("nothing to pool")
    if len(profiles) == 1:
        return profiles[0]
    ns = np.array([p.n for p in profiles], dtype=float)
    w = ns / ns.sum()
    names = [c.name for c in profiles[0].covariates]
    pooled = []
    for name in names:
        covs = [p.covariate(name) for p in profiles]
        kinds = {c.kind for c in covs}
        if kinds == {"binary_proportion"}:
            p = float(np.sum(w * [c.values[0] for c in covs]))
            pooled.append(CovariateSummary(name, "binary_proportion", (p,)))
        else:
            moments = [_as_moments(c) for c in covs]
            means = np.array([m[0] for m in moments])
            vars_ = np.array([m[1] for m in moments])
            mean = float(np.sum(w * means))
            var = float(np.sum(w * (vars_ + means**2)) - mean**2)
            pooled.append(
                CovariateSummary(name, "continuous_mean_sd", (mean, np.sqrt(max(var, 0.0))))
            )
    return BaselineProfile(profiles[0].study, label or "pooled",
                           int(ns.sum()), tuple(pooled))


def dissimilarity_matrix(profiles, covariates, mode="average") -> DissimilarityMatrix:
    if len(profiles) < 2:
        raise ValueError("need at least two profiles")
    labels = tuple(p.study.render() for p in profiles)
    if len(set(labels)) != len(labels):
        raise SimilarityError("duplicate study identifiers among profiles")
    H = len(profiles)
    D = np.zeros((H, H))
    for i in range(H):
        for j in range(i + 1, H):
            D[i, j] = D[j, i] = profile_dissimilarity(
                profiles[i], profiles[j], covariates, mode)
    return DissimilarityMatrix(labels, D, mode, tuple(covariates))


def _pam(D, k, labels):
    """PAM (BUILD + SWAP) on a precomputed dissimilarity matrix.

    Ties break by label order so results are deterministic.
    """
    H = len(labels)
    order = np.argsort(labels, kind="stable")  # label-order tiebreak

    def cost(medoids):
        return float(np.sum(np.min(D[:, medoids], axis=1)))

    # BUILD: greedily add the medoid with the lowest total cost
    medoids: list[int] = []
    for _ in range(k):
        best = None
        for cand in order:
            if cand in medoids:
                continue
            c = cost(medoids + [int(cand)])
            if best is None or c < best[0] - 1e-12:
                best = (c, int(cand))
        medoids.append(best[1])

    # SWAP until no single exchange lowers the cost
    improved = True
    while improved:
        improved = False
        current = cost(medoids)
        best_swap = None
        for mi, m in enumerate(medoids):
            for cand in order:
                if cand in medoids:
                    continue
                trial = medoids[:mi] + [int(cand)] + medoids[mi + 1:]
                c = cost(trial)
                if c < current - 1e-12 and (best_swap is None or c < best_swap[0] - 1e-12):
                    best_swap = (c, mi, int(cand))
        if best_swap is not None:
            _, mi, cand = best_swap
            medoids[mi] = cand
            improved = True

    assign = np.empty(H, dtype=int)
    for i in range(H):
        dists = D[i, medoids]
        assign[i] = medoids[int(np.argmin(dists))]
    for m in medoids:
        assign[m] = m
    return medoids, assign


def _mean_silhouette(D, assign):
    H = len(assign)
    clusters = {m: np.flatnonzero(assign == m) for m in set(assign)}
    svals = []
    degenerate = False
    for i in range(H):
        own = clusters[assign[i]]
        if len(own) == 1:
            svals.append(0.0)
            continue
        a = np.mean([D[i, j] for j in own if j != i])
        b = min(np.mean(D[i, members]) for m, members in clusters.items()
                if m != assign[i])
        denom = max(a, b)
        if denom == 0:
            svals.append(0.0)
            degenerate = True
        else:
            svals.append((b - a) / denom)
    return float(np.mean(svals)), degenerate


def cluster_kmedoids(matrix: DissimilarityMatrix, k=None, seed=0) -> ClusteringResult:
    """PAM clustering over a precomputed matrix; when k is not given it is
    chosen to maximize the mean silhouette over 2..H-1."""
    labels = list(matrix.labels)
    H = len(labels)
    D = matrix.D
    if k is not None:
        if not (2 <= k <= H - 1):
            raise ValueError(f"k must be in [2, {H - 1}]")
        ks = [k]
    else:
        if H < 3:
            raise ValueError("need at least 3 trials to choose k automatically")
        ks = list(range(2, H))

    best = None
    for kk in ks:
        medoids, assign = _pam(D, kk, labels)
        sil, degen = _mean_silhouette(D, assign)
        if best is None or sil > best[0] + 1e-12:
            best = (sil, kk, medoids, assign, degen)
    sil, kk, medoids, assign, degen = best
    if np.all(D == 0):
        degen = True
    assignment = {labels[i]: labels[assign[i]] for i in range(H)}
    return ClusteringResult(kk, tuple(labels[m] for m in medoids),
                            assignment, sil, degen)


def band(d: float) -> str:
    """Effect-size band: <0.2 small, [0.2,0.5) medium, [0.5,0.8) large,
    >=0.8 extreme."""
    if d < 0:
        raise ValueError("standardized difference must be non-negative")
    if d < 0.2:
        return "small"
    if d < 0.5:
        return "medium"
    if d < 0.8:
        return "large"
    return "extreme"
