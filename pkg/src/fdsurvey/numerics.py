"""Shared numerical kernels: time grids, quadrature, quantiles, eigendecomposition, RNG streams."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .errors import ContractError, NumericalError

__all__ = [
    "TimeGrid",
    "RngStream",
    "trapezoid",
    "empirical_quantile",
    "sym_eig",
    "standard_normals",
    "as_symmetric",
]

_SPACING_WARN_RATIO = 10.0


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered discretization points ``0 = t_1 < ... < t_d = T``.

    Parameters
    ----------
    points : array-like of float
        Strictly increasing grid starting at 0.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 1 or pts.size < 2:
            raise ContractError("a time grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ContractError("grid points must be finite")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise ContractError("grid points must be strictly increasing")
        if pts[0] != 0.0:
            raise ContractError(f"grid must start at 0, got {pts[0]!r}")
        ratio = steps.max() / steps.min()
        if ratio > _SPACING_WARN_RATIO:
            warnings.warn(
                f"grid is far from quasi-uniform (max/min spacing {ratio:.1f})",
                stacklevel=2,
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, d: int, T: float = 1.0) -> "TimeGrid":
        if d < 2:
            raise ContractError("a uniform grid needs d >= 2")
        if not T > 0:
            raise ContractError("T must be positive")
        pts = np.linspace(0.0, T, d)
        pts[-1] = T
        return cls(pts)

    @property
    def d(self) -> int:
        return int(self.points.size)

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def min_spacing(self) -> float:
        return float(np.diff(self.points).min())

    def __len__(self) -> int:
        return self.d

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.d == other.d and bool(np.array_equal(self.points, other.points))
        )

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.same_as(other)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of an independent random stream.

    A stream is identified by a master ``seed``, a ``stream_id`` and an
    optional ``namespace``; sub-streams are derived with :meth:`child`.
    Draws use the counter-based Philox generator seeded through
    :class:`numpy.random.SeedSequence`, so distinct keys give independent
    sequences and the same key reproduces identical output.
    """

    seed: int
    stream_id: int = 0
    namespace: int = 0
    path: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("seed", "stream_id", "namespace"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ContractError(f"{name} must be a non-negative integer")

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.namespace, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            int(self.seed), spawn_key=(int(self.namespace), int(self.stream_id)) + self.path
        )
        return np.random.Generator(np.random.Philox(seq))


def trapezoid(values, grid: TimeGrid) -> float:
    """Trapezoidal integral of grid values over ``[0, T]``."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.d,):
        raise ContractError(f"expected {grid.d} values, got shape {v.shape}")
    t = grid.points
    return float(np.sum(np.diff(t) * (v[1:] + v[:-1])) / 2.0)


def trapezoid_rows(values, grid: TimeGrid) -> np.ndarray:
    """Row-wise trapezoidal integrals of an ``(n, d)`` array."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[1] != grid.d:
        raise ContractError(f"expected (n, {grid.d}) values, got shape {v.shape}")
    dt = np.diff(grid.points)
    return (v[:, 1:] + v[:, :-1]) @ dt / 2.0


def empirical_quantile(samples, p: float) -> float:
    """Type-1 (inverse CDF) quantile: the ``ceil(p * B)``-th order statistic."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ContractError("cannot take a quantile of an empty sample")
    if not 0.0 < p < 1.0:
        raise ContractError("p must lie in (0, 1)")
    # round away float noise such as 0.1 * 10 = 1.0000000000000000555
    k = math.ceil(round(p * x.size, 9))
    k = min(max(k, 1), x.size)
    return float(np.partition(x, k - 1)[k - 1])


def as_symmetric(A, *, name: str = "matrix") -> np.ndarray:
    """Validate a square, finite, symmetric matrix and return it as float array."""
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractError(f"{name} has non-finite entries")
    scale = max(float(np.abs(M).max()), 1e-300)
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * scale):
        raise ContractError(f"{name} is not symmetric")
    return M


def sym_eig(A) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray
        Sorted in descending order.
    eigenvectors : ndarray
        Orthonormal columns, ``A = V diag(eigenvalues) V.T``.
    """
    M = as_symmetric(A)
    M = (M + M.T) / 2.0
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"symmetric eigensolver did not converge (order {M.shape[0]}, "
            f"max |A| = {np.abs(M).max():.3g}): {exc}"
        ) from exc
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def standard_normals(stream: RngStream, count: int) -> np.ndarray:
    """``count`` i.i.d. N(0, 1) draws, reproducible per stream."""
    if count < 0:
        raise ContractError("count must be non-negative")
    return stream.generator().standard_normal(int(count))
