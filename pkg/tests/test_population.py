import numpy as np
import pytest
from scipy.signal import lfilter

from fdsurvey.errors import ConfigError, ContractError
from fdsurvey.numerics import RngStream, TimeGrid, trapezoid
from fdsurvey.population import (
    DEFAULT_AR3_COEFFICIENTS,
    CurvePopulation,
    NoiseModel,
    ObservationMatrix,
    PopulationConfig,
    ar3_autocovariance,
    ar3_innovation_variance,
    check_stationary,
    default_basis,
    default_population_config,
    gram_schmidt,
    observe,
    population_mean,
    population_variance_at,
    synthesize_population,
)


def _single_mode_config(N, var=1.0, d=21):
    grid = TimeGrid.uniform(d)
    v = np.sqrt(2) * np.sin(2 * np.pi * grid.points)
    v = gram_schmidt(v, grid)[0]
    return PopulationConfig(N, grid, np.zeros(d), ((v, var),), seed=4), v


class TestBasis:
    def test_default_basis_orthonormal(self):
        g = TimeGrid.uniform(100)
        V = default_basis(g)
        G = np.array([[trapezoid(a * b, g) for b in V] for a in V])
        np.testing.assert_allclose(G, np.eye(3), atol=1e-12)

    def test_dependent_generators(self, grid11):
        t = grid11.points
        with pytest.raises(ConfigError):
            gram_schmidt(np.array([t, 2 * t]), grid11)

    def test_non_orthonormal_modes_rejected(self, grid11):
        cfg = PopulationConfig(10, grid11, np.zeros(11), ((np.ones(11) * 3, 1.0),))
        with pytest.raises(ConfigError):
            synthesize_population(cfg)

    def test_negative_variance(self, grid11):
        with pytest.raises(ConfigError):
            PopulationConfig(10, grid11, np.zeros(11), ((np.ones(11), -1.0),))


class TestSynthesis:
    def test_zero_variance_gives_mean(self):
        cfg = default_population_config(N=20, d=30, variances=(0.0, 0.0, 0.0))
        pop = synthesize_population(cfg)
        assert np.array_equal(pop.curves, np.broadcast_to(cfg.mean_values(), pop.curves.shape))

    def test_deterministic(self):
        cfg = default_population_config(N=3, d=10, seed=9)
        assert np.array_equal(synthesize_population(cfg).curves, synthesize_population(cfg).curves)

    def test_single_mode_covariance(self):
        cfg, v = _single_mode_config(10**4)
        X = synthesize_population(cfg).curves
        C = np.cov(X, rowvar=False)
        assert np.abs(C - np.outer(v, v)).max() < 0.05

    def test_variance_formula(self):
        cfg = default_population_config(N=10**4, d=40, seed=2)
        pop = synthesize_population(cfg)
        expected = (cfg.variances()[:, None] * cfg.basis_matrix() ** 2).sum(axis=0)
        np.testing.assert_allclose(pop.variance, expected, rtol=0.05)

    def test_flat_average_loss_order(self):
        pop = synthesize_population(default_population_config())
        mu = pop.mean
        flat = trapezoid(mu, pop.grid) / pop.grid.T
        R = trapezoid((mu - flat) ** 2, pop.grid)
        assert 1e2 < R < 1e4


class TestSummaries:
    def test_mean_identical(self, grid11):
        f = np.sin(grid11.points)
        pop = CurvePopulation(grid11, np.tile(f, (5, 1)))
        np.testing.assert_allclose(population_mean(pop), f)
        np.testing.assert_allclose(population_variance_at(pop), 0, atol=1e-15)

    def test_two_curves(self, grid11):
        pop = CurvePopulation(grid11, np.vstack([np.zeros(11), 2 * np.ones(11)]))
        np.testing.assert_allclose(population_mean(pop), 1.0)
        np.testing.assert_allclose(population_variance_at(pop), 2.0)

    def test_mean_matches_loop(self, rng):
        X = rng.normal(size=(5, 4))
        pop = CurvePopulation(TimeGrid.uniform(4), X)
        loop = np.array([sum(X[k, j] for k in range(5)) / 5 for j in range(4)])
        np.testing.assert_allclose(pop.mean, loop, atol=1e-12)

    def test_population_is_read_only(self, grid11):
        pop = CurvePopulation(grid11, np.zeros((2, 11)))
        with pytest.raises(ValueError):
            pop.curves[0, 0] = 1.0

    def test_rejects_bad_shape(self, grid11):
        with pytest.raises(ContractError):
            CurvePopulation(grid11, np.zeros((2, 10)))


class TestAR3:
    def test_white_noise(self):
        assert ar3_innovation_variance((0, 0, 0), 3.0) == pytest.approx(3.0)

    def test_ar1(self):
        assert ar3_innovation_variance((0.5, 0, 0), 1.0) == pytest.approx(0.75)

    def test_yule_walker_recursion(self):
        a = DEFAULT_AR3_COEFFICIENTS
        g = ar3_autocovariance(a, 10)
        for h in range(1, 10):
            prev = [g[abs(h - i)] for i in (1, 2, 3)]
            assert g[h] == pytest.approx(np.dot(a, prev), abs=1e-12)
        # lag-0 equation carries the unit innovation variance
        assert g[0] == pytest.approx(np.dot(a, g[1:4]) + 1.0, abs=1e-12)

    def test_long_simulation_variance(self):
        a = DEFAULT_AR3_COEFFICIENTS
        s2 = ar3_innovation_variance(a, 1.0)
        eta = np.random.default_rng(0).standard_normal(10**6 + 2000) * np.sqrt(s2)
        x = lfilter([1.0], [1.0, -a[0], -a[1], -a[2]], eta)[2000:]
        assert x.var() == pytest.approx(1.0, rel=0.02)

    @pytest.mark.parametrize("a", [(1.0, 0, 0), (0.5, 0.5, 0.1), (0, 0, 1.2)])
    def test_nonstationary(self, a):
        with pytest.raises(ConfigError):
            check_stationary(a)
        with pytest.raises(ConfigError):
            NoiseModel("ar3", 0.1, a)


@pytest.fixture(scope="module")
def pop():
    return synthesize_population(default_population_config(N=50, d=30, seed=1))


class TestObserve:
    def test_zero_noise(self, pop):
        obs = observe(pop, [3, 7], NoiseModel("heteroscedastic", 0.0), RngStream(0))
        assert np.array_equal(obs.values, pop.curves[[3, 7]])
        assert obs.units.tolist() == [3, 7]

    def test_heteroscedastic_variance(self, pop):
        obs = observe(pop, np.zeros(10**4, dtype=int), NoiseModel("heteroscedastic", 1.0), RngStream(2))
        resid = obs.values - pop.curves[0]
        np.testing.assert_allclose(resid.var(axis=0, ddof=1), pop.variance, rtol=0.05)

    @pytest.mark.slow
    def test_ar3_lag1(self, pop):
        noise = NoiseModel("ar3", 1.0)
        obs = observe(pop, np.zeros(10**4, dtype=int), noise, RngStream(3))
        e = obs.values - pop.curves[0]
        lag1 = np.mean([np.corrcoef(e[:, j], e[:, j + 1])[0, 1] for j in range(pop.d - 1)])
        g = ar3_autocovariance(noise.coefficients, 2)
        assert lag1 == pytest.approx(g[1] / g[0], abs=0.03)

    def test_noise_covariance(self, pop):
        V = NoiseModel("heteroscedastic", 0.5).covariance(pop)
        np.testing.assert_allclose(np.diag(V), 0.25 * pop.variance)
        A = NoiseModel("ar3", 0.5).covariance(pop)
        np.testing.assert_allclose(np.diag(A), 0.25 * pop.variance.mean())
        assert np.allclose(A, A.T)

    def test_deterministic(self, pop):
        n = NoiseModel("ar3", 0.2)
        a = observe(pop, [1, 2], n, RngStream(5, 1)).values
        b = observe(pop, [1, 2], n, RngStream(5, 1)).values
        assert np.array_equal(a, b)

    def test_bad_units(self, pop):
        with pytest.raises(ContractError):
            observe(pop, [pop.N], NoiseModel(), RngStream(0))

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            NoiseModel("pink")

    def test_observation_matrix_rejects_nan(self, grid11):
        with pytest.raises(ContractError):
            ObservationMatrix(grid11, np.full((1, 11), np.nan))
