"""Bandwidth selection by design-weighted leave-one-out cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .design import InclusionProbabilities, SampleDraw, SamplingDesign, inclusion_probabilities
from .errors import ContractError, DesignError, NumericalError
from .estimate import MeanEstimate
from .numerics import TimeGrid, trapezoid
from .population import ObservationMatrix
from .smooth import Kernel, SmootherWeightMatrix, local_linear_weights, smooth_rows

__all__ = [
    "CvWeights",
    "BandwidthGrid",
    "unweighted_weights",
    "opsomer_miller_weights",
    "stratified_loo_weights",
    "cv_weights",
    "loo_mean",
    "wcv_score",
    "select_bandwidth",
    "oracle_loss",
    "r_loss",
    "CV_VARIANTS",
]

CV_VARIANTS = ("unweighted", "opsomer_miller", "opsomer_miller_design", "stratified")


@dataclass(frozen=True, eq=False)
class CvWeights:
    """Outer weights ``w_k`` and leave-one-out weights ``w~_lk`` for one sample.

    Arrays are aligned with the sample rows (``draw.units`` order).

    variant
        ``"unweighted"``: ``w_k = 1/n``, ``w~_lk = 1/(n-1)`` (Rice-Silverman).
        ``"opsomer_miller"``: classical equal-weight average of the residuals
        (``w_k = 1/n``) around leave-one-out means with
        ``w~_lk = d_l / (1 - d_k)``, ``d_k = 1/(N pi_k)``.
        ``"opsomer_miller_design"``: same leave-one-out means, residuals
        weighted by ``w_k = d_k``.
        ``"stratified"``: ``w_k = d_k``; ``w~_lk`` is
        ``(N_h - 1) / ((N - 1)(n_h - 1))`` inside the stratum of ``k`` and
        ``N w_l / (N - 1)`` outside it.
    """

    variant: str
    base: np.ndarray
    design_weights: np.ndarray
    strata: np.ndarray
    N: int
    stratum_N: np.ndarray
    stratum_n: np.ndarray

    @property
    def n(self) -> int:
        return int(self.base.size)

    def _within(self) -> np.ndarray:
        Nh = self.stratum_N.astype(float)
        nh = self.stratum_n.astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (Nh - 1.0) / ((self.N - 1.0) * (nh - 1.0))

    def tilde(self, l: int, k: int) -> float:
        """Leave-one-out weight of sample row ``l`` when row ``k`` is held out."""
        if l == k:
            return 0.0
        if self.variant == "unweighted":
            return 1.0 / (self.n - 1)
        if self.variant.startswith("opsomer_miller"):
            return float(self.design_weights[l] / (1.0 - self.design_weights[k]))
        if self.strata[l] == self.strata[k]:
            return float(self._within()[self.strata[k]])
        return float(self.N * self.design_weights[l] / (self.N - 1.0))

    def tilde_matrix(self) -> np.ndarray:
        """Dense ``n x n`` matrix ``T[k, l] = w~_lk`` (small samples only)."""
        n = self.n
        if self.variant == "unweighted":
            T = np.full((n, n), 1.0 / (n - 1))
        elif self.variant.startswith("opsomer_miller"):
            dw = self.design_weights
            T = dw[None, :] / (1.0 - dw[:, None])
        else:
            T = np.broadcast_to(self.N * self.design_weights / (self.N - 1.0), (n, n)).copy()
            same = self.strata[:, None] == self.strata[None, :]
            within = self._within()[self.strata]
            T[same] = np.broadcast_to(within[:, None], (n, n))[same]
        np.fill_diagonal(T, 0.0)
        return T

    def loo_all(self, Xhat: np.ndarray) -> np.ndarray:
        """Leave-one-out means for every sampled unit, row ``k`` omitting unit ``k``."""
        X = np.asarray(Xhat, dtype=float)
        if X.shape[0] != self.n:
            raise ContractError("one smoothed curve per sampled unit is required")
        if self.variant == "unweighted":
            return (X.sum(axis=0) - X) / (self.n - 1)
        dw = self.design_weights
        weighted = dw[:, None] * X
        M = weighted.sum(axis=0)
        if self.variant.startswith("opsomer_miller"):
            return (M - weighted) / (1.0 - dw)[:, None]
        H = self.stratum_N.size
        totals = np.zeros((H, X.shape[1]))
        partial = np.zeros((H, X.shape[1]))
        np.add.at(totals, self.strata, X)
        np.add.at(partial, self.strata, weighted)
        within = self._within()[self.strata]
        rescale = self.N / (self.N - 1.0)
        return within[:, None] * (totals[self.strata] - X) + rescale * (M - partial[self.strata])


def unweighted_weights(n: int, strata=None) -> CvWeights:
    if n < 2:
        raise ContractError("cross-validation needs at least two sampled units")
    strata = np.zeros(n, dtype=np.int64) if strata is None else np.asarray(strata, dtype=np.int64)
    equal = np.full(n, 1.0 / n)
    return CvWeights("unweighted", equal, equal, strata, n, np.array([n]), np.array([n]))


def _design_base(draw: SampleDraw, probs: InclusionProbabilities) -> np.ndarray:
    return 1.0 / (draw.design.N * probs.first_order[draw.units])


def opsomer_miller_weights(draw: SampleDraw, probs: Optional[InclusionProbabilities] = None,
                           design_outer: bool = False) -> CvWeights:
    """Opsomer-Miller leave-one-out weights ``w~_lk = d_l / (1 - d_k)``.

    By default the residuals are averaged with equal weights, as in the
    classical criterion; ``design_outer=True`` weights them by ``d_k``.
    """
    if draw.n < 2:
        raise ContractError("cross-validation needs at least two sampled units")
    probs = probs or inclusion_probabilities(draw.design)
    design = draw.design
    dw = _design_base(draw, probs)
    if design_outer:
        variant, base = "opsomer_miller_design", dw
    else:
        variant, base = "opsomer_miller", np.full(draw.n, 1.0 / draw.n)
    return CvWeights(variant, base, dw, draw.strata, design.N,
                     design.stratum_sizes, np.bincount(draw.strata, minlength=design.H))


def stratified_loo_weights(design: SamplingDesign, draw: SampleDraw) -> CvWeights:
    if draw.n < 2:
        raise ContractError("cross-validation needs at least two sampled units")
    nh = np.bincount(draw.strata, minlength=design.H)
    for g in range(design.H):
        if nh[g] == 1:
            raise DesignError(f"stratum {g} has a single sampled unit; "
                              "stratified leave-one-out weights need n_h >= 2")
    dw = _design_base(draw, inclusion_probabilities(design))
    return CvWeights("stratified", dw, dw, draw.strata, design.N, design.stratum_sizes, nh)


def cv_weights(variant: str, draw: SampleDraw, probs: Optional[InclusionProbabilities] = None) -> CvWeights:
    if variant == "unweighted":
        return unweighted_weights(draw.n, draw.strata)
    if variant == "opsomer_miller":
        return opsomer_miller_weights(draw, probs)
    if variant == "opsomer_miller_design":
        return opsomer_miller_weights(draw, probs, design_outer=True)
    if variant == "stratified":
        return stratified_loo_weights(draw.design, draw)
    raise ContractError(f"unknown cross-validation variant {variant!r}")


@dataclass(frozen=True, eq=False)
class BandwidthGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0 or np.any(~np.isfinite(v)) or np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ContractError("bandwidth candidates must be positive and strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def default(cls, grid: TimeGrid, count: int = 20, low: Optional[float] = None,
                high: Optional[float] = None) -> "BandwidthGrid":
        """``count`` log-spaced values from twice the mean spacing to ``T / 4``."""
        low = 2.0 * grid.T / (grid.d - 1) if low is None else low
        high = grid.T / 4.0 if high is None else high
        if count == 1:
            return cls(np.array([low]))
        return cls(np.geomspace(low, high, count))

    def __iter__(self):
        return iter(self.values.tolist())

    def __len__(self):
        return int(self.values.size)


Smoother = Union[float, SmootherWeightMatrix]


def _as_smoother(h: Smoother, grid: TimeGrid, kernel) -> SmootherWeightMatrix:
    if isinstance(h, SmootherWeightMatrix):
        return h
    return local_linear_weights(grid, grid, float(h), kernel)


def loo_mean(h: Smoother, obs: ObservationMatrix, weights: CvWeights, k: int,
             kernel=Kernel.EPANECHNIKOV) -> np.ndarray:
    """Leave-one-out mean curve omitting sampled unit ``k`` (a unit index)."""
    if obs.n < 2:
        raise ContractError("leave-one-out needs at least two sampled units")
    rows = np.flatnonzero(obs.units == k)
    if rows.size != 1:
        raise ContractError(f"unit {k} is not in the sample")
    r = int(rows[0])
    Xhat = smooth_rows(obs.values, _as_smoother(h, obs.grid, kernel))
    coef = np.array([weights.tilde(l, r) for l in range(obs.n)])
    return coef @ Xhat


def wcv_score(h: Smoother, obs: ObservationMatrix, weights: CvWeights,
              kernel=Kernel.EPANECHNIKOV) -> float:
    """``sum_k w_k sum_j (Y_jk - mu_hat^{-k}(t_j))^2``."""
    if obs.n < 2:
        raise ContractError("cross-validation needs at least two sampled units")
    if weights.n != obs.n:
        raise ContractError("weights and observations describe different samples")
    Xhat = smooth_rows(obs.values, _as_smoother(h, obs.grid, kernel))
    resid = obs.values - weights.loo_all(Xhat)
    return float(weights.base @ np.einsum("ij,ij->i", resid, resid))


def select_bandwidth(grid: BandwidthGrid, obs: ObservationMatrix, weights: CvWeights,
                     kernel=Kernel.EPANECHNIKOV,
                     smoothers: Optional[Mapping[float, SmootherWeightMatrix]] = None
                     ) -> Tuple[float, List[Tuple[float, float]]]:
    """Minimize the cross-validation score over ``grid``; ties go to the smaller ``h``."""
    table = []
    for h in grid:
        W = smoothers[h] if smoothers is not None and h in smoothers else h
        table.append((h, wcv_score(W, obs, weights, kernel)))
    scores = np.array([s for _, s in table])
    if not np.any(np.isfinite(scores)):
        raise NumericalError("no bandwidth candidate produced a finite score")
    scores = np.where(np.isfinite(scores), scores, np.inf)
    best = int(np.argmin(scores))  # first minimum = smallest h
    return table[best][0], table


def _squared_distance(a: MeanEstimate, b, grid: TimeGrid) -> float:
    values = b.values if isinstance(b, MeanEstimate) else np.asarray(b, dtype=float)
    if values.shape != a.values.shape:
        raise ContractError("estimates live on different grids")
    return trapezoid((a.values - values) ** 2, grid)


def oracle_loss(est: MeanEstimate, oracle: MeanEstimate) -> float:
    """``L = int (mu_hat - mu_hat_s)^2 dt`` against the noise-free HT estimate."""
    if isinstance(oracle, MeanEstimate) and not est.grid.same_as(oracle.grid):
        raise ContractError("estimates live on different grids")
    return _squared_distance(est, oracle, est.grid)


def r_loss(est: MeanEstimate, truth) -> float:
    """``R = int (mu_hat - mu_N)^2 dt``."""
    return _squared_distance(est, truth, est.grid)
