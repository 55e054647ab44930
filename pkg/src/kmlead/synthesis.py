"""Hierarchical beta-Stacy survival synthesis.

The survival functions of the historical arms in one treatment class are
modeled as draws from a common discrete-time beta-Stacy process with
Weibull centering G(t) = exp(-lambda * t^kappa) and constant precision c.
Discrete hazards are integrated out analytically (beta-binomial), leaving
a three-parameter posterior over (lambda, kappa, c) sampled by adaptive
random-walk Metropolis on (log lambda, log kappa, logit(c/N)).

The posterior predictive ensemble of new-trial survival curves is then
summarized by a single approximating beta-Stacy process whose precision
c* matches the ensemble variance, giving the prior effective sample size
(ESS = c*) and effective number of events (ENE = sum of alpha*).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import betaln, gammaln

from .core import KmleadError
from .reconstructor import EventTable, TimeGrid


class ConvergenceError(KmleadError):
    pass


@dataclass(frozen=True)
class BSPHyper:
    """Weibull centering (rate, shape) and precision of one BSP prior."""

    lam: float
    kappa: float
    c: float

    def __post_init__(self):
        if self.lam <= 0 or self.kappa <= 0 or self.c <= 0:
            raise ValueError("lambda, kappa, c must all be positive")

    def G(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.lam * np.power(t, self.kappa))


@dataclass(frozen=True)
class BSPParams:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))


@dataclass(frozen=True)
class PosteriorSample:
    """MCMC draws of (lambda, kappa, c) after burn-in and thinning."""

    draws: np.ndarray  # (n_draws, 3)
    N: int  # total historical sample size
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def means(self):
        return self.draws.mean(axis=0)


@dataclass(frozen=True)
class PredictiveEnsemble:
    grid: TimeGrid
    curves: np.ndarray  # (M, K) draws of S*(t_k)
    hazards: np.ndarray  # (M, K) draws of eta*_k


@dataclass(frozen=True)
class PredictiveBSPFit:
    lam_star: float
    kappa_star: float
    c_star: float
    alpha_star: np.ndarray
    beta_star: np.ndarray
    ess: float
    ene: float
    vhat: np.ndarray
    vstar: np.ndarray


def bsp_params(h: BSPHyper, grid: TimeGrid) -> BSPParams:
    """alpha_k = c {G(t_{k-1}) - G(t_k)}, beta_k = c G(t_k), with t_0 = 0."""
    t = np.asarray(grid.times)
    G = h.G(t)
    Gprev = np.concatenate(([1.0], G[:-1]))
    return BSPParams(h.c * (Gprev - G), h.c * G)


def posterior_update(params: BSPParams, d, m) -> BSPParams:
    """Conjugate update: alpha + events, beta + survivors."""
    d = np.asarray(d, dtype=float)
    m = np.asarray(m, dtype=float)
    if d.shape != params.alpha.shape or m.shape != params.beta.shape:
        raise ValueError("count vectors must match the parameter length")
    if np.any(d < 0) or np.any(m < 0):
        raise ValueError("counts must be non-negative")
    return BSPParams(params.alpha + d, params.beta + m)


def beta_binomial_loglik(params: BSPParams, tables) -> float:
    """Log marginal likelihood of the event tables with the discrete
    hazards integrated out: sum of log BetaBinomial(d | r, alpha, beta)."""
    a, b = params.alpha, params.beta
    total = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        for tab in tables:
            d = np.asarray(tab.d, dtype=float)
            r = np.asarray(tab.r, dtype=float)
            m = r - d
            choose = gammaln(r + 1) - gammaln(d + 1) - gammaln(m + 1)
            total += float(np.sum(choose + betaln(a + d, b + m) - betaln(a, b)))
    return total


def log_prior(h: BSPHyper, N: int) -> float:
    """Vague Gamma(0.01, 0.01) priors on lambda and kappa; uniform on c/N."""
    if not (0.0 < h.c < N):
        return -np.inf
    a0, b0 = 0.01, 0.01
    lp = 0.0
    for x in (h.lam, h.kappa):
        lp += a0 * np.log(b0) - gammaln(a0) + (a0 - 1) * np.log(x) - b0 * x
    lp += -np.log(N)  # Beta(1,1) density of c/N, as a density in c
    return float(lp)


def collapsed_loglik(h: BSPHyper, tables, grid: TimeGrid, N=None) -> float:
    """Posterior kernel for (lambda, kappa, c): marginal likelihood plus
    log-priors. N defaults to the total at-risk count at t_1."""
    if N is None:
        N = sum(int(tab.r[0]) for tab in tables)
    lp = log_prior(h, N)
    if not np.isfinite(lp):
        return -np.inf
    params = bsp_params(h, grid)
    return beta_binomial_loglik(params, tables) + lp


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def _log_target(x, tables, grid, N):
    """Posterior kernel in the unconstrained parametrization
    x = (log lambda, log kappa, logit(c/N)), Jacobian included."""
    lam = np.exp(x[0])
    kappa = np.exp(x[1])
    frac = _expit(x[2])
    c = frac * N
    if lam <= 0 or kappa <= 0 or not (0 < frac < 1):
        return -np.inf
    h = BSPHyper(lam, kappa, c)
    ll = collapsed_loglik(h, tables, grid, N)
    if not np.isfinite(ll):
        return -np.inf
    # Jacobians: d lambda/dx0 = lambda, etc.; c/N logit adds p(1-p)
    jac = x[0] + x[1] + np.log(frac) + np.log1p(-frac) + np.log(N)
    out = ll + jac
    return out if np.isfinite(out) else -np.inf


def _split_rhat(chains):
    """Split-R-hat for one parameter; chains is (n_chains, n_iter)."""
    half = chains.shape[1] // 2
    segs = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    m, n = segs.shape
    means = segs.mean(axis=1)
    W = segs.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    if W <= 0:
        return np.inf if B > 0 else 1.0
    return float(np.sqrt(var_plus / W))


DEFAULT_MCMC = dict(chains=4, iters=20000, burn_in=10000, thin=5)


def fit_bhm(tables, grid: TimeGrid, chains=4, iters=20000, burn_in=10000,
            thin=5, seed=0, force=False) -> PosteriorSample:
    """Sample the collapsed posterior over (lambda, kappa, c).

    Per-coordinate proposal scales adapt toward 20-50% acceptance during
    burn-in and are frozen afterward. Raises ConvergenceError when any
    split-R-hat exceeds 1.05, unless force is set.
    """
    if not tables:
        raise ValueError("need at least one event table")
    N = sum(int(tab.r[0]) for tab in tables)
    if N <= 0:
        raise ValueError("historical sample size must be positive")

    master = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in master.spawn(chains)]

    kept_per_chain = (iters - burn_in) // thin
    all_draws = np.empty((chains, kept_per_chain, 3))
    accept_rates = []

    for ci, rng in enumerate(streams):
        x = np.array([np.log(0.05), 0.0, _logit(0.5)])
        x += 0.1 * rng.standard_normal(3)  # chain dispersion
        scales = np.array([0.5, 0.5, 0.5])
        lp = _log_target(x, tables, grid, N)
        accepted = np.zeros(3)
        proposed = np.zeros(3)
        window_acc = np.zeros(3)
        window_n = np.zeros(3)
        kept = 0
        for it in range(iters):
            # one coordinate per sweep step, cycled, keeps tuning separable
            for j in range(3):
                prop = x.copy()
                prop[j] += scales[j] * rng.standard_normal()
                lp_prop = _log_target(prop, tables, grid, N)
                proposed[j] += 1
                window_n[j] += 1
                if np.log(rng.random()) < lp_prop - lp:
                    x, lp = prop, lp_prop
                    accepted[j] += 1
                    window_acc[j] += 1
            if it < burn_in and (it + 1) % 100 == 0:
                rate = np.divide(window_acc, np.maximum(window_n, 1))
                scales *= np.where(rate < 0.2, 0.7, np.where(rate > 0.5, 1.4, 1.0))
                window_acc[:] = 0
                window_n[:] = 0
            if it >= burn_in and (it - burn_in) % thin == 0 and kept < kept_per_chain:
                lam = np.exp(x[0])
                kappa = np.exp(x[1])
                c = _expit(x[2]) * N
                all_draws[ci, kept] = (lam, kappa, c)
                kept += 1
        accept_rates.append((accepted / np.maximum(proposed, 1)).tolist())

    rhats = {}
    for pi, name in enumerate(("lambda", "kappa", "c")):
        rhats[name] = _split_rhat(all_draws[:, :, pi])
    diagnostics = {"split_rhat": rhats, "acceptance_rates": accept_rates,
                   "chains": chains, "iters": iters, "burn_in": burn_in, "thin": thin}
    worst = max(rhats.values())
    if worst > 1.05 and not force:
        raise ConvergenceError(
            f"split-R-hat {worst:.3f} exceeds 1.05 ({rhats}); rerun longer or pass force")

    draws = all_draws.reshape(-1, 3)
    return PosteriorSample(draws, N, seed, diagnostics)


def predictive_draws(post: PosteriorSample, grid: TimeGrid, M, seed=0) -> PredictiveEnsemble:
    """Sample M new-trial survival curves: for each draw of (lambda, kappa,
    c), draw independent Beta hazards and take the survival product."""
    if len(post.draws) == 0:
        raise ValueError("empty posterior")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(post.draws), size=M)
    hypers = post.draws[idx]
    K = grid.K
    t = np.asarray(grid.times)
    lam = hypers[:, 0][:, None]
    kappa = hypers[:, 1][:, None]
    c = hypers[:, 2][:, None]
    G = np.exp(-lam * np.power(t[None, :], kappa))
    Gprev = np.concatenate([np.ones((M, 1)), G[:, :-1]], axis=1)
    alpha = np.maximum(c * (Gprev - G), 1e-300)
    beta = np.maximum(c * G, 1e-300)
    eta = rng.beta(alpha, beta)
    curves = np.cumprod(1.0 - eta, axis=1)
    return PredictiveEnsemble(grid, curves, eta)


def closed_form_variance(params: BSPParams, grid: TimeGrid) -> np.ndarray:
    """V*(t_k) = prod u_k - prod v_k with v_k = (beta/(alpha+beta))^2 the
    squared survival-factor mean and u_k its second moment."""
    a, b = params.alpha, params.beta
    s = a + b
    v = (b / s) ** 2
    u = v + a * b / (s**2 * (s + 1.0))
    return np.cumprod(u) - np.cumprod(v)


def fit_predictive_bsp(post: PosteriorSample, ens: PredictiveEnsemble) -> PredictiveBSPFit:
    """Approximate the predictive ensemble by one BSP: Weibull parameters
    at the posterior means, precision c* matching the ensemble variance."""
    if len(ens.curves) == 0:
        raise ValueError("empty ensemble")
    lam_star, kappa_star, _ = post.means
    vhat = ens.curves.var(axis=0, ddof=1)
    if np.all(vhat == 0):
        raise ValueError("degenerate ensemble: all draws identical")
    grid = ens.grid
    N = post.N

    def objective(c):
        params = bsp_params(BSPHyper(lam_star, kappa_star, c), grid)
        return float(np.sum((closed_form_variance(params, grid) - vhat) ** 2))

    res = minimize_scalar(objective, bounds=(1e-9 * N, N), method="bounded",
                          options={"xatol": 1e-6 * N})
    c_star = float(res.x)
    params = bsp_params(BSPHyper(lam_star, kappa_star, c_star), grid)
    vstar = closed_form_variance(params, grid)
    ene = float(np.sum(params.alpha))
    return PredictiveBSPFit(float(lam_star), float(kappa_star), c_star,
                            params.alpha, params.beta, ess=c_star, ene=ene,
                            vhat=vhat, vstar=vstar)
