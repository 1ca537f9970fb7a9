import numpy as np
import pytest

from inversemap import problems as pb
from inversemap.mcmc import (
    Chain,
    ChainInitError,
    McmcConfig,
    chain_diagnostics,
    rwm_sample,
)
from inversemap.metrics import ks_statistic


def prior_only_problem(d=1):
    return pb.Problem(
        name="prior-only", d=d, m=1,
        prior_mean=np.zeros(d), prior_std=np.ones(d), noise_scale=1.0,
        forward=lambda xi: np.zeros(xi.shape[:-1] + (1,)),
        jacobian=lambda xi: np.zeros(xi.shape[:-1] + (1, d)),
    )


class TestConfig:
    def test_invalid_totals(self):
        with pytest.raises(ValueError):
            McmcConfig(n_total=10, n_burn=10)

    def test_invalid_thin(self):
        with pytest.raises(ValueError):
            McmcConfig(thin=0)


class TestRwmSample:
    def test_prior_recovery(self):
        p = prior_only_problem()
        cfg = McmcConfig(n_total=50_000, n_burn=2_000, thin=5, seed=0)
        chain = rwm_sample(p, np.zeros(1), cfg)
        n_eff = chain_diagnostics(chain).ess[0]
        assert abs(chain.samples.mean()) < 4.0 / np.sqrt(n_eff)
        assert abs(chain.samples.var(ddof=1) - 1.0) < 0.1

    def test_lingauss_moments(self):
        p = pb.default_lingauss_problem()
        y = np.array([0.7, -0.4])
        cfg = McmcConfig(seed=1)
        chain = rwm_sample(p, y, cfg)
        mu_s, sig_s, _ = pb.linear_gaussian_posterior(
            pb.DEFAULT_LINGAUSS_A, pb.DEFAULT_LINGAUSS_GAMMA, np.zeros(2), np.ones(2), y
        )
        summary = chain_diagnostics(chain)
        for j in range(2):
            se = np.sqrt(sig_s[j, j] / summary.ess[j])
            assert abs(summary.mean[j] - mu_s[j]) < 3 * se
        assert np.allclose(np.cov(chain.samples.T), sig_s, atol=0.05)

    def test_kept_count_bookkeeping(self):
        p = prior_only_problem()
        chain = rwm_sample(p, np.zeros(1), McmcConfig(n_total=500, n_burn=0, thin=1, seed=2))
        assert chain.samples.shape == (500, 1)
        chain = rwm_sample(p, np.zeros(1), McmcConfig(n_total=33_000, n_burn=3_000, thin=30, seed=3))
        assert chain.samples.shape == (1_000, 1)

    def test_scale_frozen_after_burnin(self):
        p = prior_only_problem()
        cfg = McmcConfig(n_total=5_000, n_burn=1_000, thin=2, seed=4)
        chain = rwm_sample(p, np.zeros(1), cfg)
        post = chain.proposal_scale_history[cfg.n_burn :]
        assert np.all(post == post[0])

    def test_seed_determinism(self):
        p = pb.default_lingauss_problem()
        cfg = McmcConfig(n_total=2_000, n_burn=500, thin=3, seed=5)
        a = rwm_sample(p, np.zeros(2), cfg)
        b = rwm_sample(p, np.zeros(2), cfg)
        assert np.array_equal(a.samples, b.samples)
        assert a.acceptance_rate == b.acceptance_rate

    def test_detailed_balance_ks_vs_direct_draws(self):
        p = prior_only_problem()
        cfg = McmcConfig(n_total=103_000, n_burn=3_000, thin=10, seed=6)
        chain = rwm_sample(p, np.zeros(1), cfg)
        direct = np.random.default_rng(7).standard_normal(10_000)
        assert ks_statistic(chain.samples[:, 0], direct) < 0.03

    def test_nonfinite_init_rejected(self):
        p = prior_only_problem()
        with pytest.raises(ChainInitError):
            rwm_sample(p, np.zeros(1), McmcConfig(init=np.array([np.nan]), seed=8))

    def test_explicit_init_vector(self):
        p = prior_only_problem()
        chain = rwm_sample(p, np.zeros(1), McmcConfig(n_total=200, n_burn=50, thin=1, init=np.array([2.0]), seed=9))
        assert chain.samples.shape == (150, 1)


class TestDiagnostics:
    def test_iid_chain_low_autocorr(self):
        samples = np.random.default_rng(10).standard_normal((10_000, 1))
        c = Chain(samples=samples, acceptance_rate=1.0, proposal_scale_history=np.ones(1))
        summary = chain_diagnostics(c)
        assert abs(summary.lag1_autocorr[0]) < 0.05
        assert summary.ess[0] > 5_000

    def test_constant_chain_flagged(self):
        samples = np.ones((100, 2))
        c = Chain(samples=samples, acceptance_rate=0.0, proposal_scale_history=np.ones(1))
        summary = chain_diagnostics(c)
        assert np.all(summary.std == 0.0)
        assert np.all(summary.ess == 1.0)

    def test_ar1_autocorr_recovered(self):
        rng = np.random.default_rng(11)
        rho = 0.5
        n = 100_000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n) * np.sqrt(1 - rho**2)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + eps[t]
        c = Chain(samples=x[:, None], acceptance_rate=1.0, proposal_scale_history=np.ones(1))
        summary = chain_diagnostics(c)
        assert abs(summary.lag1_autocorr[0] - rho) < 0.05

    def test_too_short_chain(self):
        c = Chain(samples=np.zeros((5, 1)), acceptance_rate=0.0, proposal_scale_history=np.ones(1))
        with pytest.raises(ValueError):
            chain_diagnostics(c)
