"""Monte Carlo driver comparing mean-curve estimators over repeated samples."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bands import build_band, band_area, covers
from .bandwidth import BandwidthGrid, cv_weights, oracle_loss, r_loss, select_bandwidth
from .config import ESTIMATORS, ExperimentConfig
from .design import (
    SamplingDesign,
    draw_sample,
    inclusion_probabilities,
    neyman_allocation,
    stratify_by_total,
    stratum_dispersion,
)
from .errors import FdsurveyError
from .estimate import ht_covariance, ht_mean
from .io import write_allocation_csv, write_json, write_table_csv
from .numerics import RngStream, TimeGrid, empirical_quantile, trapezoid
from .population import (
    CurvePopulation,
    NoiseModel,
    default_population_config,
    observe,
    synthesize_population,
)
from .smooth import local_linear_weights, smooth_rows

__all__ = [
    "Cell",
    "EstimatorResult",
    "ReplicateResult",
    "EstimatorSummary",
    "SummaryTable",
    "ExperimentContext",
    "ExperimentRun",
    "run_replicate",
    "run_cell",
    "run_experiment",
    "summarize",
    "quartiles",
    "METRICS",
]

log = logging.getLogger(__name__)

GP_NAMESPACE = 1
METRICS = ("R", "L", "h", "area")
# fixed sub-stream per estimator, so dropping one never shifts the others
_ESTIMATOR_STREAM = {name: i for i, name in enumerate(ESTIMATORS)}
# failures that cost one estimator, not the replicate
_RECOVERABLE = (FdsurveyError, ArithmeticError, ValueError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class Cell:
    """One block of the study: noise model, noise scale and design."""

    model: str
    delta: float
    design: str

    @property
    def key(self) -> str:
        return f"{self.model}_delta{self.delta:g}_{self.design}"


@dataclass(frozen=True)
class EstimatorResult:
    estimator: str
    R: float = math.nan
    L: float = math.nan
    h: float = math.nan
    area: float = math.nan
    area_width: float = math.nan
    threshold: float = math.nan
    clipped_mass: float = math.nan
    covers: Optional[bool] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ReplicateResult:
    index: int
    cell: Cell
    estimates: Tuple[EstimatorResult, ...]

    @property
    def failed(self) -> bool:
        return any(not e.ok for e in self.estimates)

    def get(self, estimator: str) -> EstimatorResult:
        for e in self.estimates:
            if e.estimator == estimator:
                return e
        raise KeyError(estimator)

    def to_dict(self) -> dict:
        return {"index": self.index, "estimates": {e.estimator: asdict(e) for e in self.estimates}}


class ExperimentContext:
    """Inputs shared by every replicate: population, designs and smoothers.

    Everything here is built deterministically from the configuration, so
    worker processes can rebuild an identical copy.
    """

    def __init__(self, config: ExperimentConfig, population: Optional[CurvePopulation] = None):
        self.config = config
        if population is None:
            pcfg = default_population_config(config.N, config.d, config.pop_seed, config.T,
                                             config.variances)
            population = synthesize_population(pcfg)
        self.population = population
        self.grid: TimeGrid = population.grid
        N = population.N
        self.truth = population.mean
        self.labels = stratify_by_total(population, config.cuts)
        if config.allocation:
            self.allocation = np.asarray(config.allocation, dtype=np.int64)
        else:
            self.allocation = neyman_allocation(population, self.labels, config.n)
        self.designs: Dict[str, SamplingDesign] = {}
        for name in config.designs:
            if name == "srswor":
                self.designs[name] = SamplingDesign.srswor(N, config.n)
            else:
                self.designs[name] = SamplingDesign.from_labels(self.labels, self.allocation)
        self.probs = {k: inclusion_probabilities(v) for k, v in self.designs.items()}
        self.bandwidths = BandwidthGrid.default(self.grid, config.bandwidth_count,
                                                config.bandwidth_low, config.bandwidth_high)
        self.smoothers = {h: local_linear_weights(self.grid, self.grid, h, config.kernel)
                          for h in self.bandwidths}

    @property
    def cells(self) -> List[Cell]:
        c = self.config
        return [Cell(m, float(dl), dz) for m in c.models for dl in c.deltas for dz in c.designs]

    def stratum_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        Nh = np.bincount(self.labels)
        return Nh, self.allocation, stratum_dispersion(self.population, self.labels)


def _choose(name: str, ctx: ExperimentContext, draw, probs, obs, oracle, smoothed):
    """Bandwidth (NaN for no smoothing) and smoothed sample curves for one estimator."""
    cfg = ctx.config
    if name == "oracle_mu":
        return math.nan, ctx.population.curves[draw.units]
    if name == "lin":
        # linear interpolation evaluated at the observation times is the data itself
        return math.nan, obs.values
    if name == "oracle_h":
        lin_mean = ht_mean(obs.values, draw, probs, ctx.grid)
        losses = []
        for h in ctx.bandwidths:
            m = ctx.smoothers[h].weights @ lin_mean.values
            losses.append(trapezoid((m - oracle.values) ** 2, ctx.grid))
        h = ctx.bandwidths.values[int(np.argmin(losses))]
    else:
        variant = "stratified" if name == "wcv" else cfg.cv_variant
        weights = cv_weights(variant, draw, probs)
        h, _ = select_bandwidth(ctx.bandwidths, obs, weights, cfg.kernel, ctx.smoothers)
    h = float(h)
    if h not in smoothed:
        smoothed[h] = smooth_rows(obs.values, ctx.smoothers[h])
    return h, smoothed[h]


def run_replicate(ctx: ExperimentContext, cell: Cell, index: int) -> ReplicateResult:
    """Draw sample ``index`` of ``cell`` and evaluate every configured estimator.

    The sample uses stream ``2 * index``, the noise ``2 * index + 1`` and the
    band simulation its own namespace, so each replicate depends only on
    the master seed and its index.
    """
    cfg = ctx.config
    design = ctx.designs[cell.design]
    probs = ctx.probs[cell.design]
    draw = draw_sample(design, RngStream(cfg.seed, 2 * index))
    noise = NoiseModel(cell.model, cell.delta, tuple(cfg.ar_coefficients))
    obs = observe(ctx.population, draw.units, noise, RngStream(cfg.seed, 2 * index + 1))
    oracle = ht_mean(ctx.population.curves[draw.units], draw, probs, ctx.grid)
    gp = RngStream(cfg.seed, index, GP_NAMESPACE)
    smoothed: Dict[float, np.ndarray] = {}
    out = []
    for name in cfg.estimators:
        try:
            h, X = _choose(name, ctx, draw, probs, obs, oracle, smoothed)
            est = ht_mean(X, draw, probs, ctx.grid, label=name)
            losses = dict(R=r_loss(est, ctx.truth), L=oracle_loss(est, oracle), h=h)
        except _RECOVERABLE as exc:
            out.append(EstimatorResult(name, error=f"{type(exc).__name__}: {exc}"))
            continue
        try:
            cov = ht_covariance(X, draw, probs, ctx.grid, label=name)
            band = build_band(est, cov, cfg.alpha, cfg.B, gp.child(_ESTIMATOR_STREAM[name]))
        except _RECOVERABLE as exc:
            out.append(EstimatorResult(name, **losses, error=f"band: {type(exc).__name__}: {exc}"))
            continue
        out.append(EstimatorResult(
            name, **losses,
            area=band_area(band, "unscaled"),
            area_width=band_area(band, "width"),
            threshold=band.threshold,
            clipped_mass=band.diagnostics.clipped_mass,
            covers=covers(band, ctx.truth),
        ))
    return ReplicateResult(index, cell, tuple(out))


def quartiles(values) -> Tuple[float, float, float, float]:
    """Mean and type-1 first quartile, median and third quartile of the finite values."""
    x = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if x.size == 0:
        return (math.nan,) * 4
    return (float(x.mean()), empirical_quantile(x, 0.25), empirical_quantile(x, 0.5),
            empirical_quantile(x, 0.75))


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    stats: Dict[str, Tuple[float, float, float, float]]
    coverage: float
    replicates: int
    failures: int


@dataclass(frozen=True)
class SummaryTable:
    cell: Optional[Cell]
    rows: Tuple[EstimatorSummary, ...]

    def get(self, estimator: str) -> EstimatorSummary:
        for r in self.rows:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)

    @property
    def header(self) -> List[str]:
        cols = ["estimator"]
        for m in METRICS:
            cols += [f"{m}_mean", f"{m}_q1", f"{m}_median", f"{m}_q3"]
        return cols + ["coverage", "replicates", "failures"]

    def as_rows(self) -> List[list]:
        rows = []
        for r in self.rows:
            row: list = [r.estimator]
            for m in METRICS:
                row += list(r.stats[m])
            rows.append(row + [r.coverage, r.replicates, r.failures])
        return rows

    def to_dict(self) -> dict:
        return {r.estimator: {"stats": {m: list(r.stats[m]) for m in METRICS},
                              "coverage": r.coverage, "replicates": r.replicates,
                              "failures": r.failures} for r in self.rows}


def summarize(results: Sequence[ReplicateResult]) -> SummaryTable:
    """Per-estimator mean and quartiles of each metric, plus empirical coverage."""
    if not results:
        raise ValueError("nothing to summarize")
    names = [e.estimator for e in results[0].estimates]
    rows = []
    for name in names:
        items = [r.get(name) for r in results]
        stats = {m: quartiles([getattr(e, m) for e in items]) for m in METRICS}
        flags = [e.covers for e in items if e.covers is not None]
        coverage = float(sum(flags)) / len(flags) if flags else math.nan
        rows.append(EstimatorSummary(name, stats, coverage, len(items),
                                     sum(not e.ok for e in items)))
    return SummaryTable(results[0].cell, tuple(rows))


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    results: Dict[Cell, List[ReplicateResult]]
    summaries: Dict[Cell, SummaryTable]
    failure_rates: Dict[Cell, float] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(rate > self.config.max_failure_rate for rate in self.failure_rates.values())


_WORKER_CTX: Optional[ExperimentContext] = None


def _init_worker(config: ExperimentConfig, population: Optional[CurvePopulation]) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ExperimentContext(config, population)


def _worker_task(task: Tuple[Cell, int]) -> ReplicateResult:
    return run_replicate(_WORKER_CTX, *task)


def run_cell(ctx: ExperimentContext, cell: Cell, indices: Optional[Sequence[int]] = None) -> List[ReplicateResult]:
    indices = range(ctx.config.M) if indices is None else indices
    return [run_replicate(ctx, cell, i) for i in indices]


def run_experiment(config: ExperimentConfig, out_dir=None, population: Optional[CurvePopulation] = None,
                   context: Optional[ExperimentContext] = None) -> ExperimentRun:
    """Run all ``M`` replicates of every cell and summarize them.

    With ``workers > 1`` replicates run in worker processes; results are
    merged by (cell, index), so the output does not depend on the worker
    count. When ``out_dir`` is given the tables are written there.
    """
    ctx = context or ExperimentContext(config, population)
    tasks = [(cell, i) for cell in ctx.cells for i in range(config.M)]
    log.info("running %d replicates over %d cells with %d worker(s)",
             len(tasks), len(ctx.cells), config.workers)
    if config.workers > 1:
        chunk = max(1, len(tasks) // (4 * config.workers))
        with ProcessPoolExecutor(config.workers, initializer=_init_worker,
                                 initargs=(config, ctx.population)) as pool:
            flat = list(pool.map(_worker_task, tasks, chunksize=chunk))
    else:
        flat = [run_replicate(ctx, cell, i) for cell, i in tasks]
    results: Dict[Cell, List[ReplicateResult]] = {cell: [] for cell in ctx.cells}
    for r in flat:
        results[r.cell].append(r)
    for cell in results:
        results[cell].sort(key=lambda r: r.index)
    summaries = {cell: summarize(rs) for cell, rs in results.items()}
    rates = {cell: sum(r.failed for r in rs) / len(rs) for cell, rs in results.items()}
    run = ExperimentRun(config, results, summaries, rates)
    for cell, rate in rates.items():
        if rate > 0:
            log.warning("%s: %.1f%% of replicates had estimator failures", cell.key, 100 * rate)
    if out_dir is not None:
        write_outputs(run, ctx, out_dir)
    return run


def write_outputs(run: ExperimentRun, ctx: ExperimentContext, out_dir) -> List[Path]:
    """One summary CSV per cell, the stratum table, and a JSON with every replicate row."""
    out = Path(out_dir)
    paths = []
    for cell, table in run.summaries.items():
        paths.append(write_table_csv(out / f"summary_{cell.key}.csv", table.header, table.as_rows()))
    Nh, nh, Sh = ctx.stratum_table()
    paths.append(write_allocation_csv(out / "allocation.csv", Nh, nh, Sh))
    # worker count and output location do not affect results, so keep them out
    cfg = {k: v for k, v in run.config.to_dict().items() if k not in ("workers", "output_dir")}
    payload = {
        "config": cfg,
        "bandwidths": ctx.bandwidths.values,
        "allocation": {"stratum_sizes": Nh, "sample_sizes": nh},
        "failed": run.failed,
        "cells": [
            {
                "cell": asdict(cell),
                "failure_rate": run.failure_rates[cell],
                "summary": run.summaries[cell].to_dict(),
                "replicates": [r.to_dict() for r in run.results[cell]],
            }
            for cell in run.summaries
        ],
    }
    paths.append(write_json(out / "replicates.json", payload))
    return paths
