"""Beta-Stacy prior construction, conjugate updates, the collapsed
likelihood, MCMC plumbing, and the predictive-process approximation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmlead.reconstructor import EventTable, TimeGrid
from kmlead.synthesis import (
    BSPHyper,
    BSPParams,
    ConvergenceError,
    PredictiveEnsemble,
    _split_rhat,
    beta_binomial_loglik,
    bsp_params,
    closed_form_variance,
    collapsed_loglik,
    fit_bhm,
    fit_predictive_bsp,
    log_prior,
    posterior_update,
    predictive_draws,
)

GRID72 = TimeGrid(tuple(np.arange(3.0, 73.0, 3.0)))


class TestBSPParams:
    def test_frozen_oracle_two_point_grid(self):
        # lam=0.1, kappa=1, c=10, grid (1, 2):
        # alpha_1 = 10 (1 - e^-0.1), beta_1 = 10 e^-0.1
        p = bsp_params(BSPHyper(0.1, 1.0, 10.0), TimeGrid((1.0, 2.0)))
        e1, e2 = np.exp(-0.1), np.exp(-0.2)
        np.testing.assert_allclose(p.alpha, [10 * (1 - e1), 10 * (e1 - e2)], rtol=1e-12)
        np.testing.assert_allclose(p.beta, [10 * e1, 10 * e2], rtol=1e-12)

    def test_prior_mean_telescopes_to_weibull(self):
        # prod beta/(alpha+beta) must equal G(t_k) exactly
        h = BSPHyper(0.04, 1.3, 30.0)
        p = bsp_params(h, GRID72)
        mean = np.cumprod(p.beta / (p.alpha + p.beta))
        np.testing.assert_allclose(mean, h.G(np.asarray(GRID72.times)), rtol=1e-12)

    def test_invalid_hyperparameters(self):
        for bad in [(-0.1, 1.0, 10.0), (0.1, 0.0, 10.0), (0.1, 1.0, -5.0)]:
            with pytest.raises(ValueError):
                BSPHyper(*bad)


class TestConjugacy:
    @given(st.integers(1, 30), st.integers(0, 2**31 - 1))
    @settings(max_examples=200, deadline=None)
    def test_update_is_exact(self, K, seed):
        rng = np.random.default_rng(seed)
        alpha = rng.uniform(0.1, 50.0, K)
        beta = rng.uniform(0.1, 50.0, K)
        r = rng.integers(1, 400, K)
        d = rng.integers(0, r + 1)
        m = r - d
        post = posterior_update(BSPParams(alpha, beta), d, m)
        np.testing.assert_array_equal(post.alpha, alpha + d)
        np.testing.assert_array_equal(post.beta, beta + m)


class TestCollapsedLikelihood:
    def test_frozen_quadrature_oracle(self):
        # independently computed by numerical quadrature of the
        # beta-binomial integrand, cell by cell
        tab = EventTable(("S", "a"), d=(4, 3, 2), r=(20, 14, 9))
        p = bsp_params(BSPHyper(0.05, 1.2, 15.0), TimeGrid((6.0, 12.0, 18.0)))
        ll = beta_binomial_loglik(p, [tab])
        assert ll == pytest.approx(-6.802764991695722, abs=1e-9)

    def test_two_tables_add(self):
        tab = EventTable(("S", "a"), d=(4, 3, 2), r=(20, 14, 9))
        p = bsp_params(BSPHyper(0.05, 1.2, 15.0), TimeGrid((6.0, 12.0, 18.0)))
        one = beta_binomial_loglik(p, [tab])
        two = beta_binomial_loglik(p, [tab, tab])
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_collapsed_is_likelihood_plus_prior(self):
        tab = EventTable(("S", "a"), d=(4, 3, 2), r=(20, 14, 9))
        grid = TimeGrid((6.0, 12.0, 18.0))
        h = BSPHyper(0.05, 1.2, 15.0)
        ll = collapsed_loglik(h, [tab], grid)
        expected = beta_binomial_loglik(bsp_params(h, grid), [tab]) + log_prior(h, 20)
        assert ll == pytest.approx(expected, rel=1e-12)

    def test_prior_support(self):
        assert log_prior(BSPHyper(0.05, 1.2, 15.0), N=100) > -np.inf
        assert log_prior(BSPHyper(0.05, 1.2, 150.0), N=100) == -np.inf


class TestSplitRhat:
    def test_near_one_for_iid_chains(self):
        rng = np.random.default_rng(0)
        chains = rng.standard_normal((4, 2000))
        assert _split_rhat(chains) < 1.01

    def test_detects_divergent_chains(self):
        rng = np.random.default_rng(0)
        chains = rng.standard_normal((4, 2000))
        chains[0] += 10.0
        assert _split_rhat(chains) > 1.5


class TestFitBHM:
    def make_tables(self, J=2, n=150, seed=0):
        rng = np.random.default_rng(seed)
        grid = TimeGrid(tuple(np.arange(6.0, 61.0, 6.0)))
        tables = []
        for j in range(J):
            T = rng.weibull(1.2, n) / 0.05 ** (1 / 1.2)
            C = rng.uniform(30, 60, n)
            Y = np.minimum(T, C)
            E = T <= C
            d, r = [], []
            at_risk = n
            prev = 0.0
            for t in grid.times:
                inside = (Y > prev) & (Y <= t)
                d.append(int(np.sum(inside & E)))
                r.append(at_risk)
                at_risk -= int(np.sum(inside))
                prev = t
            # clamp to a consistent life table
            tables.append(EventTable((f"S{j}", "a"), d=tuple(d), r=tuple(r)))
        return tables, grid

    def test_shapes_and_determinism(self):
        tables, grid = self.make_tables()
        post1 = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                        thin=3, seed=42, force=True)
        post2 = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                        thin=3, seed=42, force=True)
        assert post1.draws.shape == (2 * 100, 3)
        np.testing.assert_array_equal(post1.draws, post2.draws)
        assert set(post1.diagnostics["split_rhat"]) == {"lambda", "kappa", "c"}

    def test_seed_changes_draws(self):
        tables, grid = self.make_tables()
        a = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                    thin=3, seed=1, force=True)
        b = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                    thin=3, seed=2, force=True)
        assert not np.array_equal(a.draws, b.draws)

    def test_empty_tables_rejected(self):
        with pytest.raises(ValueError):
            fit_bhm([], GRID72)


class TestPredictiveDraws:
    def test_curves_are_decreasing_probabilities(self):
        tables, grid = TestFitBHM().make_tables()
        post = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                       thin=3, seed=7, force=True)
        ens = predictive_draws(post, grid, M=500, seed=1)
        assert ens.curves.shape == (500, grid.K)
        assert np.all(ens.curves >= 0) and np.all(ens.curves <= 1)
        assert np.all(np.diff(ens.curves, axis=1) <= 1e-12)

    def test_reproducible(self):
        tables, grid = TestFitBHM().make_tables()
        post = fit_bhm(tables, grid, chains=2, iters=600, burn_in=300,
                       thin=3, seed=7, force=True)
        a = predictive_draws(post, grid, M=100, seed=5)
        b = predictive_draws(post, grid, M=100, seed=5)
        np.testing.assert_array_equal(a.curves, b.curves)


class TestClosedFormVariance:
    def test_matches_brute_force_moments(self):
        # independent derivation: Var = prod E[(1-eta)^2] - prod E[1-eta]^2
        rng = np.random.default_rng(4)
        for _ in range(10):
            K = rng.integers(2, 20)
            alpha = rng.uniform(0.2, 30.0, K)
            beta = rng.uniform(0.2, 30.0, K)
            p = BSPParams(alpha, beta)
            grid = TimeGrid(tuple(np.arange(1.0, K + 1.0)))
            second = (beta * (beta + 1)) / ((alpha + beta) * (alpha + beta + 1))
            first = beta / (alpha + beta)
            expected = np.cumprod(second) - np.cumprod(first) ** 2
            np.testing.assert_allclose(closed_form_variance(p, grid), expected,
                                       rtol=1e-10)


class TestPredictiveBSPFit:
    def test_recovers_known_precision(self):
        h = BSPHyper(0.05, 1.1, 40.0)
        p = bsp_params(h, GRID72)
        rng = np.random.default_rng(8)
        eta = rng.beta(p.alpha, p.beta, size=(20000, GRID72.K))
        ens = PredictiveEnsemble(GRID72, np.cumprod(1 - eta, axis=1), eta)

        class FakePost:
            means = (0.05, 1.1, 40.0)
            N = 400
        fit = fit_predictive_bsp(FakePost(), ens)
        assert abs(fit.c_star - 40.0) / 40.0 < 0.15

    def test_ene_identity(self):
        h = BSPHyper(0.05, 1.1, 40.0)
        p = bsp_params(h, GRID72)
        rng = np.random.default_rng(8)
        eta = rng.beta(p.alpha, p.beta, size=(2000, GRID72.K))
        ens = PredictiveEnsemble(GRID72, np.cumprod(1 - eta, axis=1), eta)

        class FakePost:
            means = (0.05, 1.1, 40.0)
            N = 400
        fit = fit_predictive_bsp(FakePost(), ens)
        g_end = np.exp(-fit.lam_star * GRID72.times[-1] ** fit.kappa_star)
        assert fit.ene == pytest.approx(fit.c_star * (1 - g_end), abs=1e-9)
        assert fit.ess == fit.c_star
