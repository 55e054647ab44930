"""
Projecting survival for a planned two-arm trial
===============================================

Given predictive ensembles for a reference and a comparator arm,
summarize projected overall survival, median-OS differences, and the
probability of a clinically meaningful benefit.
"""

import numpy as np

from kmlead import (
    BSPHyper,
    PredictiveEnsemble,
    TimeGrid,
    bsp_params,
    compare,
    fan_plot_data,
    summarize,
)

rng = np.random.default_rng(21)
grid = TimeGrid(tuple(np.arange(3.0, 73.0, 3.0)))
M = 4000


def draw_ensemble(hyper, seed):
    p = bsp_params(hyper, grid)
    r = np.random.default_rng(seed)
    eta = r.beta(p.alpha, p.beta, size=(M, grid.K))
    return PredictiveEnsemble(grid, np.cumprod(1 - eta, axis=1), eta)


# Reference arm centered at median ~14 months; comparator slightly better
mono = draw_ensemble(BSPHyper(lam=0.051, kappa=1.1, c=60.0), seed=1)
dual = draw_ensemble(BSPHyper(lam=0.040, kappa=1.1, c=60.0), seed=2)

times = [12.0, 24.0, 36.0, 48.0, 60.0, 72.0]
for name, ens in [("mono", mono), ("dual", dual)]:
    s = summarize(ens, times)
    print(f"{name} arm projected OS:")
    for t, est, lo, hi in zip(times, s.estimate, s.lower, s.upper):
        print(f"  {t:5.0f} mo: {est:.3f} ({lo:.3f}, {hi:.3f})")

result = compare(mono, dual, margin=3.0, times=times)
print("\nmedian OS, mono: %.1f (%.1f, %.1f)" % result.median_a)
print("median OS, dual: %.1f (%.1f, %.1f)" % result.median_b)
print("difference:      %.1f (%.1f, %.1f)" % result.delta_median)
print("P(dual improves median OS by >= 3 months) =", result.prob_benefit)
print("draws where a median was never reached:", result.n_not_reached)

# Fan-plot rows ready for any long-format plotting tool
rows = fan_plot_data(dual, max_draws=100)
print("\nfan plot rows:", len(rows), "e.g.", rows[0])
