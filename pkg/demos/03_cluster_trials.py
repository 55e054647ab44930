"""
Grouping historical trials by baseline similarity
=================================================

Load the published baseline table of five NSCLC trials, compute
pairwise standardized-difference dissimilarities, and cluster with
k-medoids. Multi-arm trials are pooled into one n-weighted profile.
"""

from pathlib import Path

from kmlead import (
    band,
    cluster_kmedoids,
    dissimilarity_matrix,
    pool_profiles,
    read_baseline_csv,
)

here = Path(__file__).parent
profiles = read_baseline_csv(here / "data" / "baseline.csv")

# POSEIDON reports two arms; pool them so every trial contributes one profile
by_study = {}
for p in profiles:
    by_study.setdefault(p.study.render(), []).append(p)
pooled = [pool_profiles(v) for v in by_study.values()]
covariates = ["age", "female", "ecog0", "squamous", "never_smoker", "pdl1_ge1"]

for mode in ("average", "maximum"):
    matrix = dissimilarity_matrix(pooled, covariates, mode)
    result = cluster_kmedoids(matrix, k=3)
    print(f"\n{mode}-mode dissimilarities:")
    labels = matrix.labels
    for i, a in enumerate(labels):
        for j in range(i + 1, len(labels)):
            d = matrix.D[i, j]
            print(f"  {a:15s} vs {labels[j]:15s}  D = {d:.3f}  ({band(d)})")
    print(f"{mode}-mode clusters (k=3):")
    for medoid, members in sorted(result.clusters().items()):
        print(f"  around {medoid}: {sorted(members)}")

# The largest single-covariate gap is histology between the two
# KEYNOTE trials (all non-squamous vs nearly all squamous).
from kmlead import covariate_diff

k189 = next(p for p in pooled if "189" in p.study.render())
k407 = next(p for p in pooled if "407" in p.study.render())
d = covariate_diff(k189.covariate("squamous"), k407.covariate("squamous"))
print(f"\nsquamous histology, KEYNOTE-189 vs KEYNOTE-407: {d:.2f} ({band(d)})")
