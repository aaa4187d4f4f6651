"""Simultaneous confidence bands from simulated Gaussian processes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import ContractError, NumericalError
from .estimate import CovarianceEstimate, MeanEstimate, variance_curve
from .numerics import RngStream, as_symmetric, empirical_quantile, sym_eig, trapezoid

__all__ = [
    "ConfidenceBand",
    "PsdDiagnostics",
    "psd_project",
    "simulate_sup_ratios",
    "band_threshold",
    "build_band",
    "band_area",
    "covers",
    "DEFAULT_REPLICATES",
    "SIM_CHUNK",
]

DEFAULT_REPLICATES = 10000
# draws per sub-stream; fixed so results do not depend on how work is split
SIM_CHUNK = 1000
SIGMA_FLOOR = 1e-12
_THRESHOLD_DIGITS = 10


@dataclass(frozen=True)
class PsdDiagnostics:
    clipped_mass: float
    n_negative: int
    min_eigenvalue: float


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """``center +/- halfwidth`` with ``halfwidth = c * sigma_hat / sqrt(N)``."""

    grid: object
    center: np.ndarray
    halfwidth: np.ndarray
    sigma: np.ndarray
    threshold: float
    level: float
    replicates: int
    population_size: int
    diagnostics: PsdDiagnostics
    clipped_variance: int = 0

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.halfwidth


def psd_project(A) -> Tuple[np.ndarray, PsdDiagnostics]:
    """Factor ``L`` with ``L @ L.T`` the eigenvalue-clipped (nearest PSD) version of ``A``."""
    M = as_symmetric(A)
    w, V = sym_eig(M)
    neg = w < 0
    total = np.abs(w).sum()
    diag = PsdDiagnostics(
        clipped_mass=float(np.abs(w[neg]).sum() / total) if total > 0 else 0.0,
        n_negative=int(neg.sum()),
        min_eigenvalue=float(w.min()),
    )
    L = V * np.sqrt(np.where(neg, 0.0, w))
    return L, diag


def _sup_ratios_from_factor(L: np.ndarray, sigma: np.ndarray, B: int, stream: RngStream) -> np.ndarray:
    keep = sigma >= SIGMA_FLOOR * sigma.max()
    Lk = L[keep] / sigma[keep, None]
    d = L.shape[1]
    out = np.empty(B)
    for c, start in enumerate(range(0, B, SIM_CHUNK)):
        size = min(SIM_CHUNK, B - start)
        z = stream.child(c).generator().standard_normal((d, size))
        out[start:start + size] = np.abs(Lk @ z).max(axis=0)
    return out


def _normalized(cov) -> Tuple[np.ndarray, np.ndarray]:
    M = cov.matrix if isinstance(cov, CovarianceEstimate) else as_symmetric(cov)
    sigma, _ = variance_curve(M)
    if not np.any(sigma > 0):
        raise NumericalError("estimated variance is zero everywhere; no band can be formed")
    # ratios are scale free, so work with a unit-size matrix
    scale = float(np.max(sigma))
    return M / scale**2, sigma / scale


def simulate_sup_ratios(cov, B: int, stream: RngStream) -> np.ndarray:
    """``B`` draws of ``max_j |G(t_j)| / sigma_hat(t_j)`` with ``G ~ N(0, cov)``.

    Grid points with ``sigma_hat`` below ``1e-12 * max sigma_hat`` are
    skipped. Draws are made in fixed chunks, chunk ``c`` from
    ``stream.child(c)``.
    """
    if B < 1:
        raise ContractError("B must be at least 1")
    M, sigma = _normalized(cov)
    L, _ = psd_project(M)
    return _sup_ratios_from_factor(L, sigma, int(B), stream)


def band_threshold(sup_ratios, alpha: float) -> float:
    """Empirical ``1 - alpha`` quantile of the sup ratios."""
    if not 0.0 < alpha < 1.0:
        raise ContractError("alpha must lie in (0, 1)")
    c = empirical_quantile(sup_ratios, 1.0 - alpha)
    # drop float noise so equivalent covariances give identical thresholds
    return float(f"{c:.{_THRESHOLD_DIGITS}g}")


def build_band(mean: MeanEstimate, cov: CovarianceEstimate, alpha: float = 0.05,
               B: int = DEFAULT_REPLICATES, stream: RngStream = None) -> ConfidenceBand:
    if not mean.grid.same_as(cov.grid):
        raise ContractError("mean and covariance live on different grids")
    if stream is None:
        raise ContractError("an RngStream is required to simulate the threshold")
    M, sigma_unit = _normalized(cov)
    L, diagnostics = psd_project(M)
    ratios = _sup_ratios_from_factor(L, sigma_unit, int(B), stream)
    c = band_threshold(ratios, alpha)
    sigma, clipped = variance_curve(cov)
    N = mean.population_size
    halfwidth = c * sigma / math.sqrt(N)
    return ConfidenceBand(
        grid=mean.grid,
        center=mean.values.copy(),
        halfwidth=halfwidth,
        sigma=sigma,
        threshold=c,
        level=1.0 - alpha,
        replicates=int(B),
        population_size=N,
        diagnostics=diagnostics,
        clipped_variance=int(clipped.sum()),
    )


def band_area(band: ConfidenceBand, convention: str = "unscaled") -> float:
    """Band area.

    ``"unscaled"`` integrates ``2 c sigma_hat(t)``, the area on the
    ``sqrt(N)`` scale, comparable across population sizes; ``"width"``
    integrates the actual band width ``2 c sigma_hat(t) / sqrt(N)``.
    """
    width = 2.0 * band.threshold * band.sigma
    if convention == "width":
        width = width / math.sqrt(band.population_size)
    elif convention != "unscaled":
        raise ContractError(f"unknown area convention {convention!r}")
    return trapezoid(width, band.grid)


def covers(band: ConfidenceBand, truth) -> bool:
    y = np.asarray(truth, dtype=float)
    if y.shape != band.center.shape:
        raise ContractError("truth curve does not match the band grid")
    return bool(np.all(np.abs(y - band.center) <= band.halfwidth))
