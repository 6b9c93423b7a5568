"""Reference samplers: point-mass spike-and-slab, Bayesian Lasso, horseshoe."""

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from conftest import make_data
from neuronized.baselines import (GammaState, _slice_eta, bayesian_lasso_gibbs,
                                  enumerate_gamma_posterior, hard_threshold_select,
                                  horseshoe_gibbs, log_marginal_gamma, spsl_gamma_mcmc)
from neuronized.data import RegressionData
from neuronized.metrics import ess, ks_distance
from neuronized.sampler import SamplerConfig


def dense_log_marglik(gamma, X, y, g):
    """n x n route: y | sigma^2 ~ N(0, sigma^2 (I + g X_g X_g')), sigma^2 integrated out."""
    n = X.shape[0]
    Xg = X[:, np.asarray(gamma, bool)]
    S = np.eye(n) + g * Xg @ Xg.T
    _, logdet = np.linalg.slogdet(S)
    Q = y @ np.linalg.solve(S, y)
    return special.gammaln(n / 2) - n / 2 * math.log(math.pi) - 0.5 * logdet - n / 2 * math.log(Q)


def prior_only(p, n=2):
    return RegressionData(np.zeros((n, p)), np.zeros(n))


class TestMarginalLikelihood:
    @pytest.mark.parametrize("g", [0.3, 1.0, 7.0])
    def test_matches_dense_formula(self, g):
        data = make_data(30, 6, seed=4)
        rng = np.random.default_rng(0)
        for _ in range(10):
            gamma = rng.integers(0, 2, 6)
            np.testing.assert_allclose(log_marginal_gamma(gamma, data, g),
                                       dense_log_marglik(gamma, data.X, data.y, g), rtol=1e-10)

    def test_null_model(self):
        data = make_data(20, 3, seed=2)
        n = data.n
        expect = special.gammaln(n / 2) - n / 2 * math.log(math.pi) - n / 2 * math.log(
            data.y @ data.y)
        assert log_marginal_gamma(np.zeros(3), data) == pytest.approx(expect, rel=1e-12)

    def test_enumeration_normalised(self):
        data = make_data(30, 5, seed=3)
        codes, probs = enumerate_gamma_posterior(data, 1.0, 0.2)
        assert codes.size == 32 and probs.sum() == pytest.approx(1.0)
        # the modal model holds exactly the two signals
        assert codes[np.argmax(probs)] == 0b00011

    def test_enumeration_size_limit(self):
        with pytest.raises(ValueError):
            enumerate_gamma_posterior(prior_only(21))


class TestGammaSampler:
    def test_single_predictor_bayes_factor(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(40)
        data = RegressionData(x[:, None], 0.25 * x + rng.standard_normal(40))
        eta = 0.4
        lm1 = log_marginal_gamma([1], data)
        lm0 = log_marginal_gamma([0], data)
        post1 = 1.0 / (1.0 + (1 - eta) / eta * math.exp(lm0 - lm1))
        assert 0.1 < post1 < 0.9
        cfg = SamplerConfig(iterations=60000, burn_in=1000, seed=1)
        out = spsl_gamma_mcmc(data, eta=eta, config=cfg)
        ind = out.extra["codes"].astype(float)
        se = ind.std() / math.sqrt(ess(ind))
        assert abs(ind.mean() - post1) < 3 * se

    def test_total_variation_to_enumeration(self):
        data = make_data(40, 5, seed=6, theta=np.array([0.6, 0.3, 0, 0, 0]))
        _, probs = enumerate_gamma_posterior(data, 1.0, 0.3)
        cfg = SamplerConfig(iterations=101000, burn_in=1000, seed=2)
        out = spsl_gamma_mcmc(data, eta=0.3, config=cfg, draw_theta=False)
        freq = np.bincount(out.extra["codes"], minlength=32) / out.extra["codes"].size
        assert 0.5 * np.abs(freq - probs).sum() < 0.02

    def test_theta_mean_matches_model_average(self):
        data = make_data(40, 4, seed=7)
        g, eta = 1.0, 0.3
        codes, probs = enumerate_gamma_posterior(data, g, eta)
        expect = np.zeros(4)
        for c, pr in zip(codes, probs):
            idx = [j for j in range(4) if (c >> j) & 1]
            if idx:
                Xg = data.X[:, idx]
                expect[idx] += pr * np.linalg.solve(Xg.T @ Xg + np.eye(len(idx)) / g,
                                                    Xg.T @ data.y)
        cfg = SamplerConfig(iterations=81000, burn_in=1000, seed=3)
        out = spsl_gamma_mcmc(data, g, eta, config=cfg)
        np.testing.assert_allclose(out.theta.mean(0), expect, atol=0.02)

    def test_tiny_eta_keeps_null_model(self):
        data = make_data(40, 6, seed=8, theta=np.zeros(6))
        cfg = SamplerConfig(iterations=6000, burn_in=1000, seed=0)
        out = spsl_gamma_mcmc(data, eta=1e-12, config=cfg)
        assert np.all(out.extra["codes"] == 0)
        assert np.all(out.theta == 0)

    def test_cached_marglik_matches_recomputed(self):
        data = make_data(50, 8, seed=9)
        cfg = SamplerConfig(iterations=5000, burn_in=0, seed=4)
        out = spsl_gamma_mcmc(data, 1.0, 0.25, config=cfg)
        st = out.extra["final_state"]
        fresh = GammaState.compute(st.gamma, data, 1.0, 0.25)
        assert st.log_marglik == pytest.approx(fresh.log_marglik, abs=1e-8)
        assert st.log_prior == pytest.approx(fresh.log_prior, abs=1e-10)

    def test_seed_determinism(self, small_data):
        cfg = SamplerConfig(iterations=3000, burn_in=500, seed=11)
        a = spsl_gamma_mcmc(small_data, config=cfg)
        b = spsl_gamma_mcmc(small_data, config=cfg)
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.extra["codes"], b.extra["codes"])

    @pytest.mark.parametrize("kw", [{"eta": 1.0}, {"slab_variance": 0.0}, {"p_single": 1.5}])
    def test_validation(self, small_data, kw):
        with pytest.raises(ValueError):
            spsl_gamma_mcmc(small_data, **kw)


class TestSliceUpdate:
    @pytest.mark.parametrize("mu", [0.05, 1.0, 20.0])
    def test_stationary_distribution(self, mu):
        # density of eta ~ exp(-mu eta) / (1 + eta) on (0, inf)
        rng = np.random.default_rng(0)
        eta, draws = 1.0, np.empty(40000)
        for i in range(draws.size):
            for _ in range(5):
                eta = _slice_eta(eta, mu, rng)
            draws[i] = eta
        f = lambda t: math.exp(-mu * t) / (1 + t)
        Z = integrate.quad(f, 0, np.inf)[0]
        qs = np.quantile(draws, [0.1, 0.3, 0.5, 0.7, 0.9])
        cdf = [integrate.quad(f, 0, q)[0] / Z for q in qs]
        np.testing.assert_allclose(cdf, [0.1, 0.3, 0.5, 0.7, 0.9], atol=0.015)


class TestScaleMixtures:
    def test_blasso_prior_is_laplace(self):
        tau_sq = 0.5
        cfg = SamplerConfig(iterations=31000, burn_in=1000, seed=1, sigma_sq_fixed=1.0)
        out = bayesian_lasso_gibbs(prior_only(3), tau_sq, config=cfg)
        b = math.sqrt(tau_sq / 2)
        ref = stats.laplace(scale=b).rvs(size=200000, random_state=0)
        assert ks_distance(out.theta[:, 0], ref) < 0.02
        assert out.theta.var() == pytest.approx(tau_sq, rel=0.05)

    def test_horseshoe_prior_is_cauchy_scale_mixture(self):
        tau_sq = 0.25
        cfg = SamplerConfig(iterations=31000, burn_in=1000, seed=2, sigma_sq_fixed=1.0)
        out = horseshoe_gibbs(prior_only(3), tau_sq, config=cfg)
        rng = np.random.default_rng(0)
        lam = np.abs(stats.cauchy.rvs(size=200000, random_state=rng))
        ref = math.sqrt(tau_sq) * lam * rng.standard_normal(200000)
        assert ks_distance(out.theta[:, 1], ref) < 0.03

    def test_blasso_single_predictor_posterior_mean(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(30)
        y = 0.4 * x + rng.standard_normal(30)
        tau_sq = 0.2
        b = math.sqrt(tau_sq / 2)
        logf = lambda t: -0.5 * np.sum((y - x * t) ** 2) - abs(t) / b
        c = logf(0.3)
        f = lambda t: math.exp(logf(t) - c)
        Z = integrate.quad(f, -3, 3, points=[0.0])[0]
        m = integrate.quad(lambda t: t * f(t), -3, 3, points=[0.0])[0] / Z
        cfg = SamplerConfig(iterations=61000, burn_in=1000, seed=4, sigma_sq_fixed=1.0)
        out = bayesian_lasso_gibbs(RegressionData(x[:, None], y), tau_sq, config=cfg)
        th = out.theta[:, 0]
        assert abs(th.mean() - m) < 3 * th.std() / math.sqrt(ess(th))

    def test_horseshoe_strong_signal_barely_shrunk(self):
        theta0 = np.array([3.0, 0, 0, 0, 0])
        data = make_data(200, 5, seed=5, theta=theta0, sigma=0.5)
        ols = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
        cfg = SamplerConfig(iterations=12000, burn_in=2000, seed=5)
        out = horseshoe_gibbs(data, config=cfg)
        m = out.theta.mean(0)
        assert abs(m[0] - theta0[0]) < 0.05
        assert abs(m[0] - ols[0]) < 0.02
        assert np.all(np.abs(m[1:]) < np.abs(ols[1:]) + 1e-3)

    def test_horseshoe_default_global_scale(self, small_data):
        out = horseshoe_gibbs(small_data, config=SamplerConfig(iterations=200, burn_in=100))
        assert out.extra["tau_w_sq"] == pytest.approx(1 / 64)

    def test_seed_determinism(self, small_data):
        cfg = SamplerConfig(iterations=1500, burn_in=500, seed=9)
        for fn in (bayesian_lasso_gibbs, horseshoe_gibbs):
            a, b = fn(small_data, 0.5, config=cfg), fn(small_data, 0.5, config=cfg)
            np.testing.assert_array_equal(a.theta, b.theta)
            np.testing.assert_array_equal(a.sigma_sq, b.sigma_sq)

    def test_invalid_scale(self, small_data):
        for fn in (bayesian_lasso_gibbs, horseshoe_gibbs):
            with pytest.raises(ValueError):
                fn(small_data, -1.0)


class TestHardThreshold:
    def test_examples(self):
        assert hard_threshold_select(np.zeros(4), 1.0).size == 0
        np.testing.assert_array_equal(hard_threshold_select([0.05, 0.5], 1.0), [1])
        np.testing.assert_array_equal(hard_threshold_select([0.05, -0.5, 1e-9], 1.0, c=0.0),
                                      [0, 1, 2])

    def test_boundary_is_strict(self):
        assert hard_threshold_select([0.1], 1.0).size == 0
