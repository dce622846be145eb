"""Conjugate leaf models against frozen oracle values and basic invariants.

The frozen constants below were produced by the quadrature / Monte-Carlo
oracles in `oracles.py` on the literal inputs shown; the library's closed
forms must reproduce them. The acceptance suite re-runs the oracles live on
randomized leaves.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import invgamma

from bartkit import (
    GAUSSIAN_CONSTANT,
    GAUSSIAN_MULTIVARIATE_REGRESSION,
    GAUSSIAN_UNIVARIATE_REGRESSION,
    LOG_LINEAR_VARIANCE,
    GaussianConstantLeaf,
    GaussianMultivariateRegressionLeaf,
    GaussianUnivariateRegressionLeaf,
    LogLinearVarianceLeaf,
    make_leaf_model,
    sample_leaf_scale,
)
from bartkit.leaf_models import combine_stats

# Frozen oracle outputs: quadrature over the leaf parameter with the prior.
# Tuples: (residuals, precisions, sigma2, tau, expected log marginal).
CONST = [
    ([0.8, -0.3, 1.2], [1.0, 1.0, 1.0], 1.0, 0.5, -0.16914536593707735),
    ([2.1], [0.7], 0.6, 1.4, 1.1114760304203517),
    ([-0.9, -1.1, 0.4, 0.0, 2.2], [2.0, 0.5, 1.0, 3.0, 0.25], 2.5, 0.1,
     -0.10716199354233658),
]

# Tuples: (residuals, basis, precisions, sigma2, tau, expected log marginal).
UNI = [
    ([0.8, -0.3, 1.2], [1.0, -0.5, 2.0], [1.0, 1.0, 1.0], 1.0, 0.5,
     0.13003837308806046),
    ([1.5, 0.2], [0.0, 3.0], [0.5, 1.5], 0.8, 2.0, -1.7376689226960482),
    ([-0.4, 0.9, 1.1, -2.0], [1.0, 1.0, -1.0, 0.5], [1.0, 2.0, 0.5, 1.0],
     1.3, 0.25, -0.2705305431649036),
]

# Tuples: (residuals, precisions, a, b, expected log marginal).
VARLEAF = [
    ([0.8, -0.3, 1.2], [1.0, 1.0, 1.0], 3.0, 2.0, -1.2294515261457475),
    ([2.4], [0.5], 1.5, 0.7, -1.9358418363403733),
    ([-0.2, 0.1, 0.05, -0.6], [4.0, 2.0, 8.0, 1.0], 9.0, 8.2,
     -0.07779788907979829),
]

# Tuples: (residuals, basis rows, precisions, sigma2, Sigma0,
#          MC estimate from 400k prior draws, relative SE of the estimate).
MVN = [
    ([0.5, -0.2, 0.9], [[1.0, 0.3], [1.0, -0.7], [1.0, 1.2]],
     [1.0, 1.0, 1.0], 1.1, [[0.5, 0.1], [0.1, 0.4]],
     -0.4189789756833111, 0.0012101106316145833),
    ([1.4, 0.1], [[0.6], [-1.3]], [2.0, 0.5], 0.9, [[0.8]],
     0.09986945539750991, 0.0012624180785245863),
]


def accumulate_all(model, r, w, basis=None):
    stats = model.empty_stats()
    for i in range(len(r)):
        row = None if basis is None else np.atleast_1d(np.asarray(basis[i]))
        stats = model.accumulate(stats, float(r[i]), float(w[i]), row)
    return stats


class TestFrozenOracleValues:
    @pytest.mark.parametrize("r,w,sigma2,tau,expected", CONST)
    def test_constant(self, r, w, sigma2, tau, expected):
        model = GaussianConstantLeaf(tau)
        got = model.log_marginal(accumulate_all(model, r, w), sigma2)
        assert got == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("r,b,w,sigma2,tau,expected", UNI)
    def test_univariate(self, r, b, w, sigma2, tau, expected):
        model = GaussianUnivariateRegressionLeaf(tau)
        got = model.log_marginal(accumulate_all(model, r, w, basis=b), sigma2)
        assert got == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("r,w,a,b,expected", VARLEAF)
    def test_variance(self, r, w, a, b, expected):
        model = LogLinearVarianceLeaf(a, b)
        got = model.log_marginal(accumulate_all(model, r, w))
        assert got == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("r,Psi,w,sigma2,Sigma0,estimate,rel_se", MVN)
    def test_multivariate(self, r, Psi, w, sigma2, Sigma0, estimate, rel_se):
        model = GaussianMultivariateRegressionLeaf(np.array(Sigma0))
        got = model.log_marginal(accumulate_all(model, r, w, basis=Psi), sigma2)
        assert abs(got - estimate) < 3.0 * rel_se


class TestEmptyLeafIsZero:
    def test_mean_models(self):
        for model in (GaussianConstantLeaf(0.7),
                      GaussianUnivariateRegressionLeaf(0.7),
                      GaussianMultivariateRegressionLeaf(np.eye(2))):
            assert model.log_marginal(model.empty_stats(), 1.3) == pytest.approx(0.0)

    def test_variance_model(self):
        model = LogLinearVarianceLeaf(2.0, 3.0)
        assert model.log_marginal(model.empty_stats()) == pytest.approx(0.0)


class TestStatMechanics:
    @given(st.integers(0, 5000))
    @settings(max_examples=50, deadline=None)
    def test_combine_equals_joint_accumulation(self, seed):
        """Parent statistics must equal left + right exactly, for every model."""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 10))
        r = rng.normal(size=n)
        w = rng.uniform(0.2, 3.0, size=n)
        basis = rng.normal(size=(n, 2))
        cut = int(rng.integers(1, n))
        models = [
            (GaussianConstantLeaf(0.5), None),
            (GaussianUnivariateRegressionLeaf(0.5), basis[:, :1]),
            (GaussianMultivariateRegressionLeaf(np.eye(2) * 0.4), basis),
            (LogLinearVarianceLeaf(2.0, 1.0), None),
        ]
        for model, bas in models:
            whole = accumulate_all(model, r, w, bas)
            left = accumulate_all(model, r[:cut], w[:cut],
                                  None if bas is None else bas[:cut])
            right = accumulate_all(model, r[cut:], w[cut:],
                                   None if bas is None else bas[cut:])
            merged = combine_stats(model, left, right)
            if isinstance(whole, tuple):
                for a, b in zip(whole, merged):
                    np.testing.assert_allclose(b, a, rtol=1e-12)
            else:
                np.testing.assert_allclose(merged, whole, rtol=1e-12)

    def test_row_stats_match_accumulate(self):
        rng = np.random.default_rng(3)
        r = rng.normal(size=6)
        w = rng.uniform(0.5, 2.0, size=6)
        basis = rng.normal(size=(6, 1))
        model = GaussianUnivariateRegressionLeaf(1.0)
        rows = model.row_stats(r, w, basis)
        summed = rows.sum(axis=0)
        np.testing.assert_allclose(summed, accumulate_all(model, r, w, basis),
                                   rtol=1e-12)

    def test_grid_matches_scalar_calls(self):
        rng = np.random.default_rng(4)
        model = GaussianConstantLeaf(0.8)
        stats = np.column_stack([rng.uniform(0.1, 5.0, 8),
                                 rng.normal(0, 2.0, 8)])
        grid = model.log_marginal_grid(stats, 1.7)
        for k in range(8):
            assert grid[k] == pytest.approx(model.log_marginal(stats[k], 1.7))

    def test_univariate_with_unit_basis_equals_constant(self):
        r = [0.4, -1.2, 0.9]
        w = [1.0, 2.0, 0.5]
        cm = GaussianConstantLeaf(0.6)
        um = GaussianUnivariateRegressionLeaf(0.6)
        ones = [1.0] * 3
        assert um.log_marginal(accumulate_all(um, r, w, ones), 1.1) == \
            pytest.approx(cm.log_marginal(accumulate_all(cm, r, w), 1.1), rel=1e-14)

    def test_multivariate_1d_equals_univariate(self):
        r = [0.4, -1.2, 0.9]
        b = [0.3, -0.8, 1.7]
        w = [1.0, 2.0, 0.5]
        um = GaussianUnivariateRegressionLeaf(0.6)
        mm = GaussianMultivariateRegressionLeaf(np.array([[0.6]]))
        got_u = um.log_marginal(accumulate_all(um, r, w, b), 1.1)
        got_m = mm.log_marginal(
            accumulate_all(mm, r, w, [[v] for v in b]), 1.1)
        assert got_m == pytest.approx(got_u, rel=1e-12)


class TestPosteriorDraws:
    def test_constant_leaf_posterior_moments(self):
        """Draws must match the conjugate posterior N(tau*swr/d, tau*sigma2/d)."""
        model = GaussianConstantLeaf(0.9)
        stats = np.array([4.0, 2.5])  # sw, swr
        sigma2 = 1.2
        denom = sigma2 + 0.9 * 4.0
        mean = 0.9 * 2.5 / denom
        sd = math.sqrt(0.9 * sigma2 / denom)
        rng = np.random.default_rng(5)
        draws = np.array([model.sample_leaf(stats, sigma2, rng)[0]
                          for _ in range(40_000)])
        assert draws.mean() == pytest.approx(mean, abs=4 * sd / 200.0)
        assert draws.std() == pytest.approx(sd, rel=0.02)

    def test_variance_leaf_posterior_moments(self):
        """exp(draw) must follow IG(a + n/2, b + s/2)."""
        model = LogLinearVarianceLeaf(3.0, 2.0)
        stats = np.array([6.0, 4.0])  # n, sum w r^2
        rng = np.random.default_rng(6)
        draws = np.exp([model.sample_leaf(stats, 1.0, rng)[0]
                        for _ in range(40_000)])
        dist = invgamma(3.0 + 3.0, scale=2.0 + 2.0)
        assert np.mean(draws) == pytest.approx(dist.mean(), rel=0.02)
        assert np.std(draws) == pytest.approx(dist.std(), rel=0.05)

    def test_multivariate_posterior_mean(self):
        model = GaussianMultivariateRegressionLeaf(np.eye(2) * 0.5)
        G = np.array([[3.0, 0.5], [0.5, 2.0]])
        h = np.array([1.2, -0.7])
        sigma2 = 0.8
        P = np.linalg.inv(np.eye(2) * 0.5) + G / sigma2
        mean = np.linalg.solve(P, h / sigma2)
        rng = np.random.default_rng(7)
        draws = np.array([model.sample_leaf((G, h), sigma2, rng)
                          for _ in range(40_000)])
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.01)
        np.testing.assert_allclose(np.cov(draws.T), np.linalg.inv(P), atol=0.01)


class TestLeafScaleDraw:
    def test_matches_inverse_gamma(self):
        rng = np.random.default_rng(8)
        values = np.array([0.5, -0.25, 1.0, 0.0])
        a, b = 3.0, 0.4
        draws = np.array([sample_leaf_scale(values, a, b, rng)
                          for _ in range(60_000)])
        dist = invgamma(a + 2.0, scale=b + 0.5 * float(values @ values))
        assert draws.mean() == pytest.approx(dist.mean(), rel=0.02)
        assert np.quantile(draws, 0.5) == pytest.approx(dist.median(), rel=0.02)


class TestConfiguration:
    def test_factory_codes(self):
        assert isinstance(make_leaf_model(GAUSSIAN_CONSTANT, tau=1.0),
                          GaussianConstantLeaf)
        assert isinstance(make_leaf_model(GAUSSIAN_UNIVARIATE_REGRESSION, tau=1.0),
                          GaussianUnivariateRegressionLeaf)
        assert isinstance(
            make_leaf_model(GAUSSIAN_MULTIVARIATE_REGRESSION, Sigma0=np.eye(2)),
            GaussianMultivariateRegressionLeaf)
        assert isinstance(make_leaf_model(LOG_LINEAR_VARIANCE, a=2.0, b=1.0),
                          LogLinearVarianceLeaf)
        with pytest.raises(ValueError):
            make_leaf_model(99)

    def test_flags(self):
        assert GaussianConstantLeaf(1.0).requires_basis is False
        assert GaussianUnivariateRegressionLeaf(1.0).requires_basis is True
        assert GaussianMultivariateRegressionLeaf(np.eye(3)).leaf_dimension == 3
        assert LogLinearVarianceLeaf(1.0, 1.0).is_exponentiated is True

    def test_scale_validation(self):
        with pytest.raises(ValueError):
            GaussianConstantLeaf(0.0)
        with pytest.raises(ValueError):
            GaussianConstantLeaf(1.0).update_scale(-2.0)
        with pytest.raises(ValueError):
            GaussianMultivariateRegressionLeaf(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError):
            LogLinearVarianceLeaf(0.0, 1.0)

    def test_update_scale_changes_marginal(self):
        r, w = [0.5, 0.9], [1.0, 1.0]
        m = GaussianConstantLeaf(0.3)
        before = m.log_marginal(accumulate_all(m, r, w), 1.0)
        m.update_scale(1.5)
        after = m.log_marginal(accumulate_all(m, r, w), 1.0)
        fresh = GaussianConstantLeaf(1.5)
        assert after == pytest.approx(
            fresh.log_marginal(accumulate_all(fresh, r, w), 1.0), rel=1e-14)
        assert before != after
