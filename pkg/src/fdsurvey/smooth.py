"""Kernels, local linear smoother weights and linear interpolation."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .numerics import TimeGrid

__all__ = [
    "Kernel",
    "kernel_eval",
    "SmootherWeightMatrix",
    "local_linear_weights",
    "smooth_curve",
    "smooth_rows",
    "linear_interpolate",
    "interpolation_matrix",
]


class Kernel(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    TRIANGULAR = "triangular"
    UNIFORM = "uniform"


def kernel_eval(kernel, u):
    """Evaluate a compactly supported kernel on ``[-1, 1]`` (vectorized)."""
    kernel = Kernel(kernel)
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    if kernel is Kernel.EPANECHNIKOV:
        out = np.where(inside, 0.75 * (1.0 - u * u), 0.0)
    elif kernel is Kernel.TRIANGULAR:
        out = np.where(inside, 1.0 - np.abs(u), 0.0)
    else:
        out = np.where(inside, 0.5, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class SmootherWeightMatrix:
    """Linear smoother ``X_hat(t_i) = sum_j weights[i, j] * Y_j``.

    ``fallback[i]`` marks evaluation points where the local linear fit was
    degenerate and Nadaraya-Watson weights were used instead.
    """

    source_grid: TimeGrid
    eval_grid: TimeGrid
    weights: np.ndarray
    bandwidth: Optional[float]
    kernel: Optional[Kernel]
    fallback: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)
        self.fallback.setflags(write=False)

    @property
    def label(self) -> str:
        return "interpolation" if self.bandwidth is None else f"h={self.bandwidth:.6g}"

    @property
    def is_identity(self) -> bool:
        return self.bandwidth is None and self.source_grid.same_as(self.eval_grid)


def local_linear_weights(source_grid: TimeGrid, eval_grid: Optional[TimeGrid] = None,
                         h: float = 0.1, kernel=Kernel.EPANECHNIKOV) -> SmootherWeightMatrix:
    """Local linear smoother weights for bandwidth ``h``.

    Rows where fewer than two grid points fall in the kernel window, or
    where the local design is degenerate, fall back to Nadaraya-Watson
    weights; if the window is empty it is widened to reach the two nearest
    grid points. Such rows are flagged in ``fallback``.
    """
    if not h > 0:
        raise ContractError(f"bandwidth must be positive, got {h!r}")
    kernel = Kernel(kernel)
    eval_grid = source_grid if eval_grid is None else eval_grid
    t = source_grid.points
    x = eval_grid.points
    dt = t[None, :] - x[:, None]
    K = kernel_eval(kernel, dt / h)
    s0 = K.sum(axis=1)
    s1 = (dt * K).sum(axis=1)
    s2 = (dt * dt * K).sum(axis=1)
    denom = s2 * s0 - s1 * s1
    active = K > 0
    n_active = active.sum(axis=1)
    span = np.where(active, dt * dt, 0.0).max(axis=1)
    ok = (n_active >= 2) & (denom >= 1e-12 * s0 * s0 * span)
    W = np.zeros_like(dt)
    W[ok] = (s2[ok, None] - dt[ok] * s1[ok, None]) * K[ok] / denom[ok, None]
    fallback = ~ok
    for i in np.flatnonzero(fallback):
        W[i] = _fallback_row(dt[i], K[i], h, kernel)
    return SmootherWeightMatrix(source_grid, eval_grid, W, float(h), kernel, fallback)


def _fallback_row(dt: np.ndarray, k: np.ndarray, h: float, kernel: Kernel) -> np.ndarray:
    if not np.any(k > 0):
        # widen just enough to cover the two nearest grid points
        reach = np.sort(np.abs(dt))[1]
        k = kernel_eval(kernel, dt / (reach * (1.0 + 1e-6) + 1e-300))
        if not np.any(k > 0):
            k = (np.abs(dt) <= reach).astype(float)
    return k / k.sum()


def smooth_curve(obs_row, W: SmootherWeightMatrix) -> np.ndarray:
    y = np.asarray(obs_row, dtype=float)
    if y.shape != (W.source_grid.d,):
        raise ContractError(f"expected {W.source_grid.d} observations, got shape {y.shape}")
    return W.weights @ y


def smooth_rows(Y, W: SmootherWeightMatrix) -> np.ndarray:
    """Smooth every row of an ``(n, d)`` array with one weight matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != W.source_grid.d:
        raise ContractError(f"expected (n, {W.source_grid.d}) observations, got {Y.shape}")
    if W.is_identity:
        return Y.copy()
    return Y @ W.weights.T


def interpolation_matrix(source_grid: TimeGrid, eval_grid: Optional[TimeGrid] = None) -> SmootherWeightMatrix:
    """Linear interpolation written as a weight matrix."""
    eval_grid = source_grid if eval_grid is None else eval_grid
    t = source_grid.points
    x = eval_grid.points
    if x[0] < t[0] or x[-1] > t[-1]:
        raise ContractError(f"evaluation points must lie in [0, {source_grid.T}]")
    W = np.zeros((x.size, t.size))
    j = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
    frac = (x - t[j]) / (t[j + 1] - t[j])
    rows = np.arange(x.size)
    W[rows, j] = 1.0 - frac
    W[rows, j + 1] += frac
    return SmootherWeightMatrix(source_grid, eval_grid, W, None, None, np.zeros(x.size, dtype=bool))


def linear_interpolate(obs_row, source_grid: TimeGrid, eval_grid: Optional[TimeGrid] = None) -> np.ndarray:
    y = np.asarray(obs_row, dtype=float)
    if y.shape != (source_grid.d,):
        raise ContractError(f"expected {source_grid.d} observations, got shape {y.shape}")
    eval_grid = source_grid if eval_grid is None else eval_grid
    x = eval_grid.points
    if x[0] < 0 or x[-1] > source_grid.T:
        raise ContractError(f"evaluation points must lie in [0, {source_grid.T}]")
    return np.interp(x, source_grid.points, y)
