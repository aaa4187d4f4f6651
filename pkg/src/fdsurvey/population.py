"""Finite populations of discretized curves and noisy observation of sampled units."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, ContractError
from .numerics import RngStream, TimeGrid, trapezoid_rows

__all__ = [
    "CurveSpec",
    "PopulationConfig",
    "CurvePopulation",
    "NoiseModel",
    "ObservationMatrix",
    "DEFAULT_AR3_COEFFICIENTS",
    "default_mean_curve",
    "default_basis",
    "default_population_config",
    "gram_schmidt",
    "evaluate_curve",
    "synthesize_population",
    "population_mean",
    "population_variance_at",
    "observe",
    "ar3_innovation_variance",
    "ar3_autocovariance",
    "check_stationary",
]

DEFAULT_AR3_COEFFICIENTS = (0.89, 0.3, -0.4)
AR_BURN_IN = 1000
_POPULATION_NAMESPACE = 2

# a curve is either a vectorized callable of t or a tabulated array on the grid
CurveSpec = Union[Callable[[np.ndarray], np.ndarray], Sequence[float], np.ndarray]


def evaluate_curve(spec: CurveSpec, grid: TimeGrid) -> np.ndarray:
    if callable(spec):
        values = np.asarray(spec(grid.points), dtype=float)
        values = np.broadcast_to(values, (grid.d,)).copy()
    else:
        values = np.asarray(spec, dtype=float)
        if values.shape != (grid.d,):
            raise ConfigError(
                f"tabulated curve has {values.size} values, grid has {grid.d} points"
            )
    if not np.all(np.isfinite(values)):
        raise ConfigError("curve values must be finite")
    return values


def _bump(t, center, width):
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def default_mean_curve(t):
    """Trend plus an evening peak and a smaller morning peak."""
    t = np.asarray(t, dtype=float)
    return 100.0 + 40.0 * t + 120.0 * _bump(t, 0.78, 0.08) + 60.0 * _bump(t, 0.32, 0.1)


def _level_mode(t):
    t = np.asarray(t, dtype=float)
    return 1.0 + 1.5 * _bump(t, 0.78, 0.08) + 0.8 * _bump(t, 0.32, 0.1)


def _seasonal_mode(t):
    return np.sin(2.0 * np.pi * np.asarray(t, dtype=float))


def _shift_mode(t):
    return np.sin(4.0 * np.pi * np.asarray(t, dtype=float))


DEFAULT_MODE_GENERATORS = (_level_mode, _seasonal_mode, _shift_mode)
DEFAULT_MODE_VARIANCES = (90.0**2, 25.0**2, 15.0**2)


def gram_schmidt(curves: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Orthonormalize rows under the trapezoidal inner product of ``grid``."""
    F = np.array(curves, dtype=float, ndmin=2)
    dt = np.diff(grid.points)
    q = np.zeros(grid.d)
    q[:-1] += dt / 2
    q[1:] += dt / 2
    out = []
    for f in F:
        v = f.copy()
        # two passes keep the result orthogonal to machine precision
        for _ in range(2):
            for u in out:
                v -= np.dot(q * v, u) * u
        norm = np.sqrt(np.dot(q * v, v))
        if norm < 1e-12:
            raise ConfigError("basis generators are linearly dependent on this grid")
        out.append(v / norm)
    return np.array(out)


def default_basis(grid: TimeGrid) -> np.ndarray:
    """Three orthonormal modes: level-with-peaks, daily cycle, half-day cycle."""
    raw = np.array([evaluate_curve(g, grid) for g in DEFAULT_MODE_GENERATORS])
    return gram_schmidt(raw, grid)


@dataclass(frozen=True)
class PopulationConfig:
    """Recipe for a synthetic population ``X_k = mu + sum_l Z_kl v_l``.

    ``modes`` holds ``(basis curve, variance)`` pairs; the basis curves
    must be orthonormal under the grid's trapezoidal inner product.
    """

    N: int
    grid: TimeGrid
    mean_curve: CurveSpec = default_mean_curve
    modes: Tuple[Tuple[CurveSpec, float], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError("population size N must be an integer >= 2")
        object.__setattr__(self, "modes", tuple((c, float(v)) for c, v in self.modes))
        for _, var in self.modes:
            if not var >= 0:
                raise ConfigError("mode variances must be non-negative")

    def mean_values(self) -> np.ndarray:
        return evaluate_curve(self.mean_curve, self.grid)

    def basis_matrix(self) -> np.ndarray:
        if not self.modes:
            return np.zeros((0, self.grid.d))
        V = np.array([evaluate_curve(c, self.grid) for c, _ in self.modes])
        G = _trapezoid_gram(V, self.grid)
        err = np.abs(G - np.eye(len(V))).max()
        if err > 1e-6:
            raise ConfigError(f"mode basis is not orthonormal on the grid (error {err:.2e})")
        return V

    def variances(self) -> np.ndarray:
        return np.array([v for _, v in self.modes], dtype=float)


def _trapezoid_gram(V: np.ndarray, grid: TimeGrid) -> np.ndarray:
    dt = np.diff(grid.points)
    q = np.zeros(grid.d)
    q[:-1] += dt / 2
    q[1:] += dt / 2
    return (V * q) @ V.T


def default_population_config(N: int = 2000, d: int = 100, seed: int = 0, T: float = 1.0,
                              variances: Sequence[float] = DEFAULT_MODE_VARIANCES) -> PopulationConfig:
    grid = TimeGrid.uniform(d, T)
    basis = default_basis(grid)
    if len(variances) != len(basis):
        raise ConfigError(f"expected {len(basis)} mode variances")
    return PopulationConfig(
        N=N,
        grid=grid,
        mean_curve=default_mean_curve,
        modes=tuple((b, v) for b, v in zip(basis, variances)),
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class CurvePopulation:
    """True curve values ``X_k(t_j)`` for all ``N`` units (read-only)."""

    grid: TimeGrid
    curves: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.curves, dtype=float))
        if X.ndim != 2 or X.shape[1] != self.grid.d:
            raise ContractError(f"curves must be (N, {self.grid.d}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ContractError("population curves must be finite")
        X.setflags(write=False)
        object.__setattr__(self, "curves", X)

    @property
    def N(self) -> int:
        return int(self.curves.shape[0])

    @property
    def d(self) -> int:
        return self.grid.d

    @cached_property
    def mean(self) -> np.ndarray:
        return self.curves.mean(axis=0)

    @cached_property
    def variance(self) -> np.ndarray:
        if self.N < 2:
            raise ContractError("variance needs N >= 2")
        return self.curves.var(axis=0, ddof=1)

    @cached_property
    def totals(self) -> np.ndarray:
        return trapezoid_rows(self.curves, self.grid)


def synthesize_population(config: PopulationConfig) -> CurvePopulation:
    mu = config.mean_values()
    V = config.basis_matrix()
    sd = np.sqrt(config.variances())
    gen = RngStream(config.seed, 0, _POPULATION_NAMESPACE).generator()
    Z = gen.standard_normal((config.N, len(sd))) * sd
    X = mu + Z @ V
    return CurvePopulation(config.grid, X)


def population_mean(pop: CurvePopulation) -> np.ndarray:
    return pop.mean.copy()


def population_variance_at(pop: CurvePopulation) -> np.ndarray:
    """Per-time unbiased variance across units (``N - 1`` denominator)."""
    return pop.variance.copy()


def check_stationary(coeffs: Sequence[float]) -> None:
    a = np.asarray(coeffs, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError("AR(3) needs three finite coefficients")
    companion = np.zeros((3, 3))
    companion[0] = a
    companion[1, 0] = companion[2, 1] = 1.0
    radius = np.abs(np.linalg.eigvals(companion)).max()
    if radius >= 1.0 - 1e-12:
        raise ConfigError(f"AR(3) coefficients {tuple(a)} are not stationary (spectral radius {radius:.4f})")


def _ar3_unit_autocov(coeffs) -> np.ndarray:
    a1, a2, a3 = coeffs
    # Yule-Walker equations for (g0, g1, g2, g3) with unit innovation variance
    A = np.array(
        [
            [1.0, -a1, -a2, -a3],
            [-a1, 1.0 - a2, -a3, 0.0],
            [-a2, -a1 - a3, 1.0, 0.0],
            [-a3, -a2, -a1, 1.0],
        ]
    )
    return np.linalg.solve(A, np.array([1.0, 0.0, 0.0, 0.0]))


def ar3_innovation_variance(coeffs: Sequence[float], target_variance: float) -> float:
    """Innovation variance giving a stationary AR(3) the requested marginal variance."""
    check_stationary(coeffs)
    if target_variance < 0:
        raise ContractError("target variance must be non-negative")
    g0 = _ar3_unit_autocov(tuple(float(c) for c in coeffs))[0]
    return float(target_variance / g0)


def ar3_autocovariance(coeffs: Sequence[float], nlags: int, innovation_variance: float = 1.0) -> np.ndarray:
    """Autocovariances at lags ``0 .. nlags - 1`` of a stationary AR(3)."""
    check_stationary(coeffs)
    a1, a2, a3 = (float(c) for c in coeffs)
    g = np.zeros(max(nlags, 4))
    g[:4] = _ar3_unit_autocov((a1, a2, a3))
    for h in range(4, g.size):
        g[h] = a1 * g[h - 1] + a2 * g[h - 2] + a3 * g[h - 3]
    return innovation_variance * g[:nlags]


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise ``delta * eps``.

    ``variant`` is ``"heteroscedastic"`` (independent, variance equal to the
    population variance at each time) or ``"ar3"`` (stationary AR(3) path
    per unit whose marginal variance is the time-averaged population
    variance).
    """

    variant: str = "heteroscedastic"
    delta: float = 0.05
    coefficients: Tuple[float, float, float] = DEFAULT_AR3_COEFFICIENTS

    def __post_init__(self):
        if self.variant not in ("heteroscedastic", "ar3"):
            raise ConfigError(f"unknown noise variant {self.variant!r}")
        if not self.delta >= 0:
            raise ConfigError("noise scale delta must be non-negative")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.variant == "ar3":
            check_stationary(self.coefficients)

    def covariance(self, pop: CurvePopulation) -> np.ndarray:
        """Covariance matrix of ``delta * eps_k`` on the grid (same for every unit)."""
        v = pop.variance
        if self.variant == "heteroscedastic":
            return np.diag(self.delta**2 * v)
        sigma2 = ar3_innovation_variance(self.coefficients, float(v.mean()))
        g = ar3_autocovariance(self.coefficients, pop.d, sigma2)
        lags = np.abs(np.subtract.outer(np.arange(pop.d), np.arange(pop.d)))
        return self.delta**2 * g[lags]


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """Noisy values ``Y_jk``; row ``i`` belongs to ``units[i]``."""

    grid: TimeGrid
    values: np.ndarray
    units: np.ndarray = field(default=None)

    def __post_init__(self):
        Y = np.asarray(self.values, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.grid.d:
            raise ContractError(f"observations must be (n, {self.grid.d}), got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise ContractError("observations must be finite")
        units = np.arange(Y.shape[0]) if self.units is None else np.asarray(self.units, dtype=np.int64)
        if units.shape != (Y.shape[0],):
            raise ContractError("one unit index per observation row is required")
        object.__setattr__(self, "values", Y)
        object.__setattr__(self, "units", units)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def _ar3_paths(gen: np.random.Generator, n: int, d: int, coeffs, innovation_sd: float) -> np.ndarray:
    eta = gen.standard_normal((n, AR_BURN_IN + d)) * innovation_sd
    a1, a2, a3 = coeffs
    paths = lfilter([1.0], [1.0, -a1, -a2, -a3], eta, axis=1)
    return paths[:, AR_BURN_IN:]


def observe(pop: CurvePopulation, units, noise: NoiseModel, stream: RngStream) -> ObservationMatrix:
    """Noisy discretized observations ``Y = X + delta * eps`` for the given units."""
    idx = np.asarray(units, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= pop.N)):
        raise ContractError("unit indices out of range")
    X = pop.curves[idx]
    if noise.delta == 0:
        return ObservationMatrix(pop.grid, X.copy(), idx)
    gen = stream.generator()
    v = pop.variance
    if noise.variant == "heteroscedastic":
        eps = gen.standard_normal((idx.size, pop.d)) * np.sqrt(v)
    else:
        sigma2 = ar3_innovation_variance(noise.coefficients, float(v.mean()))
        eps = _ar3_paths(gen, idx.size, pop.d, noise.coefficients, np.sqrt(sigma2))
    return ObservationMatrix(pop.grid, X + noise.delta * eps, idx)
