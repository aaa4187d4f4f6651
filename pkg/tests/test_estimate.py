import numpy as np
import pytest

from fdsurvey.design import SampleDraw, SamplingDesign, inclusion_probabilities
from fdsurvey.errors import ContractError, DesignError
from fdsurvey.estimate import CovarianceEstimate, exact_gamma, ht_covariance, ht_mean, variance_curve
from fdsurvey.numerics import TimeGrid
from fdsurvey.smooth import local_linear_weights

from oracles import all_draws


def naive_gamma_hat(X, draw, probs):
    """Quadruple loop over (k, l, s, t)."""
    N = draw.design.N
    u = draw.units
    d = X.shape[1]
    G = np.zeros((d, d))
    for a, k in enumerate(u):
        for b, l in enumerate(u):
            w = probs.delta(k, l) / (probs.pi_kl(k, l) * probs.pi(k) * probs.pi(l))
            for s in range(d):
                for t in range(d):
                    G[s, t] += w * X[a, s] * X[b, t]
    return G / N


DESIGNS = [
    SamplingDesign.srswor(6, 3),
    SamplingDesign.srswor(4, 2),
    SamplingDesign.stratified([[0, 1, 2], [3, 4, 5]], [2, 2]),
    SamplingDesign.stratified([[0, 3, 5], [1, 2], [4]], [2, 2, 1]),
]


class TestMean:
    def test_census_average(self, rng):
        X = rng.normal(size=(5, 4))
        design = SamplingDesign.srswor(5, 5)
        m = ht_mean(X, SampleDraw(np.arange(5), design), inclusion_probabilities(design))
        np.testing.assert_allclose(m.values, X.mean(axis=0), atol=1e-14)

    def test_identical_curves(self):
        design = SamplingDesign.stratified([[0, 1, 2], [3, 4, 5, 6]], [1, 3])
        probs = inclusion_probabilities(design)
        f = np.array([1.0, -2.0, 3.5])
        for draw in all_draws(design):
            np.testing.assert_allclose(ht_mean(np.tile(f, (4, 1)), draw, probs).values, f, atol=1e-14)

    @pytest.mark.parametrize("design", DESIGNS)
    def test_unbiased_by_enumeration(self, design, rng):
        X = rng.normal(size=(design.N, 4))
        probs = inclusion_probabilities(design)
        draws = all_draws(design)
        avg = np.mean([ht_mean(X[d.units], d, probs).values for d in draws], axis=0)
        np.testing.assert_allclose(avg, X.mean(axis=0), atol=1e-12)

    def test_row_count_checked(self, rng):
        design = SamplingDesign.srswor(4, 2)
        with pytest.raises(ContractError):
            ht_mean(rng.normal(size=(3, 4)), SampleDraw(np.array([0, 1]), design), inclusion_probabilities(design))


class TestCovariance:
    @pytest.mark.parametrize("design", DESIGNS[:3])
    def test_naive_loop(self, design, rng):
        probs = inclusion_probabilities(design)
        X = rng.normal(size=(design.N, 3))
        for draw in all_draws(design)[:5]:
            G = ht_covariance(X[draw.units], draw, probs).matrix
            np.testing.assert_allclose(G, naive_gamma_hat(X[draw.units], draw, probs), atol=1e-12)

    @pytest.mark.parametrize("design", DESIGNS[:3])
    def test_unbiased_and_exact(self, design, rng):
        X = rng.normal(size=(design.N, 3))
        probs = inclusion_probabilities(design)
        draws = all_draws(design)
        gamma = exact_gamma(X, probs)
        avg = np.mean([ht_covariance(X[d.units], d, probs).matrix for d in draws], axis=0)
        np.testing.assert_allclose(avg, gamma, atol=1e-12)
        # gamma is N times the design covariance of the HT mean
        means = np.array([ht_mean(X[d.units], d, probs).values for d in draws])
        emp = design.N * np.cov(means, rowvar=False, bias=True)
        np.testing.assert_allclose(gamma, emp, atol=1e-12)

    def test_census_zero(self, rng):
        design = SamplingDesign.srswor(4, 4)
        probs = inclusion_probabilities(design)
        draw = SampleDraw(np.arange(4), design)
        np.testing.assert_allclose(ht_covariance(rng.normal(size=(4, 3)), draw, probs).matrix, 0, atol=1e-15)
        np.testing.assert_allclose(exact_gamma(rng.normal(size=(4, 3)), probs), 0, atol=1e-15)

    def test_bilinear(self, rng):
        design = SamplingDesign.srswor(6, 3)
        probs = inclusion_probabilities(design)
        draw = all_draws(design)[4]
        X = np.zeros((3, 4))
        X[1] = rng.normal(size=4)
        G1 = ht_covariance(X, draw, probs).matrix
        G2 = ht_covariance(2.5 * X, draw, probs).matrix
        np.testing.assert_allclose(G2, 6.25 * G1, rtol=1e-13)

    def test_zero_pairs_rejected(self, rng):
        design = SamplingDesign.stratified([[0, 1], [2, 3]], [1, 1])
        with pytest.raises(DesignError):
            ht_covariance(rng.normal(size=(2, 3)), SampleDraw(np.array([0, 2]), design),
                          inclusion_probabilities(design))

    def test_white_noise_census(self):
        g = TimeGrid.uniform(9)
        design = SamplingDesign.srswor(5, 5)
        W = local_linear_weights(g, None, 0.3).weights
        G = exact_gamma(np.zeros((5, 9)), inclusion_probabilities(design), 0.4 * np.eye(9), W)
        np.testing.assert_allclose(G, 0.4 * W @ W.T, atol=1e-14)

    def test_scaled(self, rng):
        B = rng.normal(size=(3, 3))
        c = CovarianceEstimate(TimeGrid.uniform(3), B @ B.T, 10)
        np.testing.assert_allclose(c.scaled(3.0).matrix, 3 * B @ B.T)


class TestVarianceCurve:
    def test_values(self):
        s, clip = variance_curve(np.diag([4.0, 9.0]))
        assert s.tolist() == [2.0, 3.0] and not clip.any()
        s, clip = variance_curve(np.zeros((3, 3)))
        assert s.tolist() == [0, 0, 0]

    def test_negative_clipped(self):
        s, clip = variance_curve(np.diag([1.0, -1e-6]))
        assert s.tolist() == [1.0, 0.0] and clip.tolist() == [False, True]
