"""Sampling designs: SRSWOR and stratified SRSWOR, inclusion probabilities, allocation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DesignError
from .numerics import RngStream, TimeGrid, empirical_quantile, trapezoid_rows
from .population import CurvePopulation

__all__ = [
    "SamplingDesign",
    "InclusionProbabilities",
    "SampleDraw",
    "srswor_draw",
    "stratified_draw",
    "draw_sample",
    "inclusion_probabilities",
    "stratify_by_total",
    "stratum_dispersion",
    "neyman_allocation",
    "allocation_variance",
]


@dataclass(frozen=True, eq=False)
class SamplingDesign:
    """Fixed-size design over units ``0 .. N-1``.

    Every design is stored as a stratification: ``labels[k]`` is the
    stratum of unit ``k`` and ``sizes[g]`` the number of units drawn by
    SRSWOR in stratum ``g``. Plain SRSWOR is the one-stratum case.
    """

    labels: np.ndarray
    sizes: np.ndarray
    variant: str = "stratified"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise ConfigError("design needs at least one unit")
        H = sizes.size
        if labels.min() < 0 or labels.max() >= H:
            raise ConfigError("stratum labels must index the size vector")
        counts = np.bincount(labels, minlength=H)
        if np.any(counts == 0):
            raise ConfigError(f"empty strata: {np.flatnonzero(counts == 0).tolist()}")
        if np.any(sizes < 1) or np.any(sizes > counts):
            raise ConfigError(f"need 0 < n_h <= N_h per stratum, got n={sizes.tolist()} N={counts.tolist()}")
        if self.variant not in ("srswor", "stratified"):
            raise ConfigError(f"unknown design variant {self.variant!r}")
        labels.setflags(write=False)
        sizes.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def srswor(cls, N: int, n: int) -> "SamplingDesign":
        if not 0 < n <= N:
            raise ConfigError(f"SRSWOR needs 0 < n <= N, got n={n}, N={N}")
        return cls(np.zeros(N, dtype=np.int64), np.array([n]), "srswor")

    @classmethod
    def stratified(cls, strata: Sequence[Sequence[int]], sizes: Sequence[int]) -> "SamplingDesign":
        if len(strata) != len(sizes):
            raise ConfigError("one sample size per stratum is required")
        N = sum(len(s) for s in strata)
        labels = np.full(N, -1, dtype=np.int64)
        for g, members in enumerate(strata):
            members = np.asarray(members, dtype=np.int64)
            if members.size and (members.min() < 0 or members.max() >= N):
                raise ConfigError("stratum members must lie in 0 .. N-1")
            if np.any(labels[members] != -1):
                raise ConfigError("strata overlap")
            labels[members] = g
        if np.any(labels < 0):
            raise ConfigError("strata do not cover the population")
        return cls(labels, np.asarray(sizes), "stratified")

    @classmethod
    def from_labels(cls, labels, sizes) -> "SamplingDesign":
        return cls(labels, sizes, "stratified")

    @property
    def N(self) -> int:
        return int(self.labels.size)

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def H(self) -> int:
        return int(self.sizes.size)

    @property
    def stratum_sizes(self) -> np.ndarray:
        return self._counts

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)


@dataclass(frozen=True, eq=False)
class InclusionProbabilities:
    """First and second order inclusion probabilities of a stratified SRSWOR design.

    Second-order quantities are O(1) accessors built from stratum
    membership; no N x N matrix is ever formed.
    """

    design: SamplingDesign

    @cached_property
    def stratum_pi(self) -> np.ndarray:
        return self.design.sizes / self.design.stratum_sizes

    @cached_property
    def stratum_pi_pair(self) -> np.ndarray:
        """Joint probability for two distinct units of the same stratum."""
        n = self.design.sizes.astype(float)
        Nh = self.design.stratum_sizes.astype(float)
        out = np.zeros_like(n)
        multi = Nh > 1
        out[multi] = n[multi] * (n[multi] - 1) / (Nh[multi] * (Nh[multi] - 1))
        return out

    @cached_property
    def first_order(self) -> np.ndarray:
        pi = self.stratum_pi[self.design.labels]
        pi.setflags(write=False)
        return pi

    def pi(self, k: int) -> float:
        return float(self.first_order[k])

    def pi_kl(self, k: int, l: int) -> float:
        if k == l:
            return self.pi(k)
        gk, gl = self.design.labels[k], self.design.labels[l]
        if gk != gl:
            return self.pi(k) * self.pi(l)
        return float(self.stratum_pi_pair[gk])

    def delta(self, k: int, l: int) -> float:
        if k == l:
            p = self.pi(k)
            return p * (1.0 - p)
        return self.pi_kl(k, l) - self.pi(k) * self.pi(l)

    def pi_kl_matrix(self, units=None) -> np.ndarray:
        """Dense ``pi_kl`` over a (small) set of units, for diagnostics and tests."""
        idx = np.arange(self.design.N) if units is None else np.asarray(units)
        lab = self.design.labels[idx]
        pi = self.first_order[idx]
        M = np.outer(pi, pi)
        same = lab[:, None] == lab[None, :]
        M[same] = self.stratum_pi_pair[np.broadcast_to(lab[:, None], same.shape)[same]]
        np.fill_diagonal(M, pi)
        return M

    def delta_matrix(self, units=None) -> np.ndarray:
        idx = np.arange(self.design.N) if units is None else np.asarray(units)
        pi = self.first_order[idx]
        return self.pi_kl_matrix(idx) - np.outer(pi, pi)

    @property
    def has_zero_pairs(self) -> bool:
        """True when some pair of distinct units can never be sampled together."""
        multi = self.design.stratum_sizes > 1
        return bool(np.any(self.design.sizes[multi] < 2))


def inclusion_probabilities(design: SamplingDesign) -> InclusionProbabilities:
    return InclusionProbabilities(design)


@dataclass(frozen=True, eq=False)
class SampleDraw:
    """Sorted indices of the selected units and the design they came from."""

    units: np.ndarray
    design: SamplingDesign

    def __post_init__(self):
        u = np.asarray(self.units, dtype=np.int64)
        if u.size and np.any(np.diff(u) <= 0):
            raise ContractError("sample units must be sorted and distinct")
        u.setflags(write=False)
        object.__setattr__(self, "units", u)

    @property
    def n(self) -> int:
        return int(self.units.size)

    @property
    def strata(self) -> np.ndarray:
        return self.design.labels[self.units]


def _partial_fisher_yates(N: int, n: int, gen: np.random.Generator) -> np.ndarray:
    pool = np.arange(N, dtype=np.int64)
    picks = gen.integers(np.arange(n), N)
    for i, j in enumerate(picks):
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:n]


def srswor_draw(N: int, n: int, stream: RngStream, design: SamplingDesign = None) -> SampleDraw:
    """Uniform size-``n`` subset of ``0 .. N-1``."""
    if not 1 <= n <= N:
        raise ContractError(f"SRSWOR needs 1 <= n <= N, got n={n}, N={N}")
    chosen = _partial_fisher_yates(N, n, stream.generator())
    if design is None:
        design = SamplingDesign.srswor(N, n)
    return SampleDraw(np.sort(chosen), design)


def stratified_draw(design: SamplingDesign, stream: RngStream) -> SampleDraw:
    """Independent SRSWOR in every stratum, stratum ``g`` using sub-stream ``g``."""
    picked = []
    for g in range(design.H):
        members = design.members(g)
        sub = _partial_fisher_yates(members.size, int(design.sizes[g]), stream.child(g).generator())
        picked.append(members[sub])
    return SampleDraw(np.sort(np.concatenate(picked)), design)


def draw_sample(design: SamplingDesign, stream: RngStream) -> SampleDraw:
    if design.variant == "srswor":
        return srswor_draw(design.N, design.n, stream, design)
    return stratified_draw(design, stream)


def stratify_by_total(pop: CurvePopulation, cut_probs: Sequence[float]) -> np.ndarray:
    """Stratum label per unit from quantiles of the integrated curve.

    Unit ``k`` lands in stratum ``g`` when its total lies in
    ``(q[g-1], q[g]]``; quantiles are type-1 empirical quantiles.
    """
    cuts = np.asarray(cut_probs, dtype=float)
    if cuts.ndim != 1 or np.any(cuts <= 0) or np.any(cuts >= 1) or np.any(np.diff(cuts) <= 0):
        raise ConfigError("cut probabilities must be strictly increasing inside (0, 1)")
    totals = pop.totals
    q = np.array([empirical_quantile(totals, p) for p in cuts])
    labels = np.searchsorted(q, totals, side="left").astype(np.int64)
    counts = np.bincount(labels, minlength=cuts.size + 1)
    if np.any(counts == 0):
        raise ConfigError(
            f"stratification left strata {np.flatnonzero(counts == 0).tolist()} empty "
            "(tied totals?)"
        )
    return labels


def stratum_dispersion(pop: CurvePopulation, labels) -> np.ndarray:
    """Integrated within-stratum standard deviation ``S_h`` of the curves."""
    labels = np.asarray(labels, dtype=np.int64)
    H = int(labels.max()) + 1
    S = np.zeros(H)
    for g in range(H):
        Xg = pop.curves[labels == g]
        if Xg.shape[0] < 2:
            continue
        resid = Xg - Xg.mean(axis=0)
        S[g] = np.sqrt(trapezoid_rows(resid**2, pop.grid).sum() / (Xg.shape[0] - 1))
    return S


def allocation_variance(Nh, Sh, nh) -> float:
    """HT variance proxy ``sum_h N_h^2 (1/n_h - 1/N_h) S_h^2`` of a stratified mean."""
    Nh, Sh, nh = (np.asarray(a, dtype=float) for a in (Nh, Sh, nh))
    return float(np.sum(Nh**2 * (1.0 / nh - 1.0 / Nh) * Sh**2))


def _largest_remainder(target: np.ndarray, total: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    base = np.clip(np.floor(target).astype(np.int64), lo, hi)
    rem = target - np.floor(target)
    short = total - int(base.sum())
    order = np.lexsort((np.arange(target.size), -rem))
    while short > 0:
        moved = False
        for g in order:
            if short == 0:
                break
            if base[g] < hi[g]:
                base[g] += 1
                short -= 1
                moved = True
        if not moved:
            break
    while short < 0:
        for g in order[::-1]:
            if short == 0:
                break
            if base[g] > lo[g]:
                base[g] -= 1
                short += 1
    return base


def _clamped_neyman(Nh: np.ndarray, Sh: np.ndarray, n: int) -> np.ndarray:
    """Continuous Neyman allocation with the box constraints 1 <= n_h <= N_h."""
    score = Nh * Sh
    if score.sum() == 0:
        score = Nh.astype(float)
    free = np.ones(Nh.size, dtype=bool)
    alloc = np.zeros(Nh.size)
    for _ in range(2 * Nh.size + 1):
        budget = n - alloc[~free].sum()
        share = np.where(free, score, 0.0)
        alloc[free] = budget * share[free] / share[free].sum() if share[free].sum() > 0 else budget / free.sum()
        over = free & (alloc > Nh)
        under = free & (alloc < 1)
        if not over.any() and not under.any():
            break
        alloc[over] = Nh[over]
        alloc[under] = 1.0
        free &= ~(over | under)
        if not free.any():
            break
    return alloc


def neyman_allocation(pop: CurvePopulation, labels, n: int) -> np.ndarray:
    """Per-stratum sample sizes proportional to ``N_h * S_h``.

    The continuous allocation is clamped to ``1 <= n_h <= N_h``, rounded by
    largest remainder, and then polished by single-unit transfers so the
    result minimizes :func:`allocation_variance` over integer allocations.
    """
    labels = np.asarray(labels, dtype=np.int64)
    Nh = np.bincount(labels)
    H = Nh.size
    if np.any(Nh == 0):
        raise ConfigError("every stratum must be nonempty")
    if n < H:
        raise ConfigError(f"sample size {n} is smaller than the number of strata {H}")
    if n > Nh.sum():
        raise ConfigError(f"sample size {n} exceeds the population size {Nh.sum()}")
    Sh = stratum_dispersion(pop, labels)
    return _neyman_integer(Nh, Sh, n)


def _neyman_integer(Nh: np.ndarray, Sh: np.ndarray, n: int) -> np.ndarray:
    lo = np.ones(Nh.size, dtype=np.int64)
    hi = Nh.astype(np.int64)
    alloc = _largest_remainder(_clamped_neyman(Nh, Sh, n), n, lo, hi)
    # the objective is separable and convex in n_h: no improving transfer means optimal
    cost = (Nh.astype(float) * Sh) ** 2
    while True:
        gain_add = np.where(alloc < hi, cost / alloc - cost / (alloc + 1.0), -np.inf)
        loss_remove = np.where(alloc > lo, cost / np.maximum(alloc - 1.0, 1.0) - cost / alloc, np.inf)
        a = int(np.argmax(gain_add))
        r = int(np.argmin(loss_remove))
        if a == r or gain_add[a] - loss_remove[r] <= 1e-12 * max(cost.max(), 1e-300):
            return alloc
        alloc[a] += 1
        alloc[r] -= 1
