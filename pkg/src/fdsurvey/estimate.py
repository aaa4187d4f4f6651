"""Horvitz-Thompson estimators of the mean curve and of its covariance function."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .design import InclusionProbabilities, SampleDraw
from .errors import ContractError, DesignError
from .numerics import TimeGrid, as_symmetric

__all__ = [
    "MeanEstimate",
    "CovarianceEstimate",
    "ht_mean",
    "ht_covariance",
    "exact_gamma",
    "variance_curve",
]


@dataclass(frozen=True, eq=False)
class MeanEstimate:
    grid: TimeGrid
    values: np.ndarray
    population_size: int
    label: str = ""
    design: str = ""
    sample_size: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.d,):
            raise ContractError(f"mean estimate needs {self.grid.d} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractError("mean estimate is not finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Symmetric ``d x d`` matrix of ``gamma_hat(t_i, t_j)``; not necessarily PSD."""

    grid: TimeGrid
    matrix: np.ndarray
    population_size: int
    label: str = ""
    design: str = ""
    sample_size: int = 0

    def __post_init__(self):
        M = as_symmetric(self.matrix, name="covariance estimate")
        if M.shape[0] != self.grid.d:
            raise ContractError("covariance order does not match the grid")
        object.__setattr__(self, "matrix", M)

    def scaled(self, factor: float) -> "CovarianceEstimate":
        return CovarianceEstimate(self.grid, self.matrix * factor, self.population_size,
                                  self.label, self.design, self.sample_size)


def _check_rows(smoothed, draw: SampleDraw) -> np.ndarray:
    X = np.asarray(smoothed, dtype=float)
    if X.ndim != 2 or X.shape[0] != draw.n:
        raise ContractError(
            f"expected one smoothed curve per sampled unit ({draw.n}), got shape {X.shape}"
        )
    return X


def ht_mean(smoothed, draw: SampleDraw, probs: InclusionProbabilities, grid: Optional[TimeGrid] = None,
            label: str = "") -> MeanEstimate:
    """``mu_hat(t) = N^{-1} sum_{k in s} X_hat_k(t) / pi_k``."""
    X = _check_rows(smoothed, draw)
    N = draw.design.N
    pi = probs.first_order[draw.units]
    values = (1.0 / pi) @ X / N
    grid = grid or TimeGrid.uniform(X.shape[1])
    return MeanEstimate(grid, values, N, label, draw.design.variant, draw.n)


def _stratum_coefficients(probs: InclusionProbabilities) -> Tuple[np.ndarray, np.ndarray]:
    """Per-stratum ``Delta_kl / (pi_kl pi_k pi_l)`` for distinct pairs and for ``k = l``."""
    pi = probs.stratum_pi
    pair = probs.stratum_pi_pair
    off = np.zeros_like(pi)
    has_pair = pair > 0
    off[has_pair] = (pair[has_pair] - pi[has_pair] ** 2) / (pair[has_pair] * pi[has_pair] ** 2)
    diag = (1.0 - pi) / pi**2
    return off, diag


def ht_covariance(smoothed, draw: SampleDraw, probs: InclusionProbabilities,
                  grid: Optional[TimeGrid] = None, label: str = "") -> CovarianceEstimate:
    """Horvitz-Thompson estimator of ``gamma_N``.

    The weight ``Delta_kl / (pi_kl pi_k pi_l)`` only depends on whether two
    sampled units share a stratum, so the double sum reduces to one outer
    product of stratum totals plus one Gram matrix per stratum.
    """
    X = _check_rows(smoothed, draw)
    if probs.has_zero_pairs:
        raise DesignError("a stratum samples a single unit, so some pi_kl = 0; "
                          "the covariance estimator is undefined")
    N = draw.design.N
    off, diag = _stratum_coefficients(probs)
    labels = draw.strata
    d = X.shape[1]
    G = np.zeros((d, d))
    for g in np.unique(labels):
        Xg = X[labels == g]
        total = Xg.sum(axis=0)
        G += off[g] * np.outer(total, total) + (diag[g] - off[g]) * (Xg.T @ Xg)
    G /= N
    G = (G + G.T) / 2.0
    grid = grid or TimeGrid.uniform(d)
    return CovarianceEstimate(grid, G, N, label, draw.design.variant, draw.n)


def exact_gamma(smoothed_population, probs: InclusionProbabilities, noise_cov=None,
                weights=None) -> np.ndarray:
    """Design-and-noise covariance ``gamma_N`` of ``sqrt(N) * mu_hat``.

    Parameters
    ----------
    smoothed_population : (N, d) array
        Smoothed noise-free curves ``X_tilde_k`` of every population unit.
    probs : InclusionProbabilities
    noise_cov : (d, d) array, optional
        Covariance of the raw measurement errors on the source grid.
    weights : (m, d) array, optional
        Smoother weight matrix mapping the noise to the evaluation grid;
        identity when omitted.
    """
    X = np.asarray(smoothed_population, dtype=float)
    design = probs.design
    if X.shape[0] != design.N:
        raise ContractError("one curve per population unit is required")
    N = design.N
    pi = probs.stratum_pi
    pair = probs.stratum_pi_pair
    m = X.shape[1]
    G = np.zeros((m, m))
    for g in range(design.H):
        Xg = X[design.labels == g]
        total = Xg.sum(axis=0)
        off = pair[g] - pi[g] ** 2
        on = pi[g] * (1.0 - pi[g])
        G += (off * np.outer(total, total) + (on - off) * (Xg.T @ Xg)) / pi[g] ** 2
    G /= N
    if noise_cov is not None:
        V = as_symmetric(noise_cov, name="noise covariance")
        W = np.eye(V.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        if W.shape[1] != V.shape[0] or W.shape[0] != m:
            raise ContractError("smoother weights do not match the noise covariance")
        G += np.mean(1.0 / probs.first_order) * (W @ V @ W.T)
    return (G + G.T) / 2.0


def variance_curve(cov: CovarianceEstimate) -> Tuple[np.ndarray, np.ndarray]:
    """``sigma_hat(t) = max(gamma_hat(t, t), 0) ** 0.5`` and a mask of clipped points."""
    diag = np.diag(cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov, dtype=float))
    clipped = diag < 0
    return np.sqrt(np.where(clipped, 0.0, diag)), clipped
