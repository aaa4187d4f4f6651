"""Command-line entry point: ``fdsurvey <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .bands import build_band
from .bandwidth import cv_weights, select_bandwidth
from .config import CV_CHOICES, ESTIMATORS, load_config
from .design import draw_sample
from .errors import ConfigError, DesignError, NumericalError
from .estimate import ht_covariance, ht_mean
from .harness import GP_NAMESPACE, ExperimentContext, run_experiment
from .io import (
    band_summary,
    read_population,
    write_allocation_csv,
    write_band_csv,
    write_json,
    write_mean_csv,
    write_observations,
    write_population,
    write_score_table,
    write_strata_csv,
    write_table_csv,
)
from .numerics import RngStream
from .population import NoiseModel, observe
from .smooth import local_linear_weights, smooth_rows

log = logging.getLogger("fdsurvey")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FAILURES = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with [population], [design], ... sections")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes for replicates")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--full-scale", dest="full_scale", action="store_true",
                   help="start from the large study defaults (slow)")
    p.add_argument("--population", type=Path,
                   help="read the population from a CSV or .fsrv file instead of synthesizing it")
    p.add_argument("-v", "--verbose", action="store_true")


def _sample_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", choices=("srswor", "stratified"), default="stratified")
    p.add_argument("--noise", choices=("heteroscedastic", "ar3"), default="heteroscedastic")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--replicate", type=int, default=0, help="sample index (selects the streams)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdsurvey", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a population and write it to a file")
    _common(p)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")

    p = sub.add_parser("stratify", help="stratify the population and print the allocation table")
    _common(p)

    p = sub.add_parser("estimate", help="estimate the mean curve and band from one sample")
    _common(p)
    _sample_args(p)
    p.add_argument("--estimator", choices=("lin", "cv", "wcv"), default="wcv")
    p.add_argument("--bandwidth", type=float, help="fixed bandwidth; skips cross-validation")

    p = sub.add_parser("cv", help="cross-validation score table for one sample")
    _common(p)
    _sample_args(p)
    p.add_argument("--variant", choices=("stratified",) + CV_CHOICES, default="stratified")

    p = sub.add_parser("experiment", help="run the full Monte Carlo study")
    _common(p)
    p.add_argument("--replicates", "-M", dest="M", type=int, help="Monte Carlo replicates")
    return parser


def _load(args) -> tuple:
    overrides = dict(seed=args.seed, workers=args.workers, M=getattr(args, "M", None))
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    config = load_config(args.config, full_scale=args.full_scale, overrides=overrides)
    population = read_population(args.population) if args.population else None
    if population is not None:
        config = config.replace(N=population.N, d=population.d)
    return config, population


def _one_sample(ctx: ExperimentContext, args):
    cfg = ctx.config
    if args.design not in ctx.designs:
        raise ConfigError(f"design {args.design!r} is not enabled in the config")
    design = ctx.designs[args.design]
    probs = ctx.probs[args.design]
    draw = draw_sample(design, RngStream(cfg.seed, 2 * args.replicate))
    noise = NoiseModel(args.noise, args.delta, tuple(cfg.ar_coefficients))
    obs = observe(ctx.population, draw.units, noise, RngStream(cfg.seed, 2 * args.replicate + 1))
    return draw, probs, obs


def cmd_synth(args) -> int:
    config, population = _load(args)
    ctx = ExperimentContext(config, population)
    out = Path(config.output_dir)
    name = "population.fsrv" if args.format == "binary" else "population.csv"
    path = write_population(out / name, ctx.population)
    write_table_csv(out / "mean.csv", ["t", "mean"], zip(ctx.grid.points.tolist(), ctx.truth.tolist()))
    print(f"wrote {ctx.population.N} curves on {ctx.grid.d} points to {path}")
    return EXIT_OK


def cmd_stratify(args) -> int:
    config, population = _load(args)
    ctx = ExperimentContext(config, population)
    out = Path(config.output_dir)
    Nh, nh, Sh = ctx.stratum_table()
    write_strata_csv(out / "strata.csv", ctx.labels)
    write_allocation_csv(out / "allocation.csv", Nh, nh, Sh)
    print(f"{'stratum':>8} {'size':>8} {'allocation':>11}")
    for g in range(Nh.size):
        print(f"{g + 1:>8} {Nh[g]:>8} {nh[g]:>11}")
    print(f"{'total':>8} {Nh.sum():>8} {nh.sum():>11}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    config, population = _load(args)
    ctx = ExperimentContext(config, population)
    draw, probs, obs = _one_sample(ctx, args)
    h = None
    if args.bandwidth is not None:
        h = args.bandwidth
    elif args.estimator != "lin":
        variant = "stratified" if args.estimator == "wcv" else config.cv_variant
        h, _ = select_bandwidth(ctx.bandwidths, obs, cv_weights(variant, draw, probs),
                                config.kernel, ctx.smoothers)
    if h is None:
        X = obs.values
    else:
        W = ctx.smoothers.get(h) or local_linear_weights(ctx.grid, ctx.grid, h, config.kernel)
        X = smooth_rows(obs.values, W)
    mean = ht_mean(X, draw, probs, ctx.grid, label=args.estimator)
    cov = ht_covariance(X, draw, probs, ctx.grid)
    stream = RngStream(config.seed, args.replicate, GP_NAMESPACE).child(ESTIMATORS.index(args.estimator))
    band = build_band(mean, cov, config.alpha, config.B, stream)
    out = Path(config.output_dir)
    write_observations(out / "sample.csv", obs)
    write_mean_csv(out / "mean.csv", mean)
    write_band_csv(out / "band.csv", band)
    summary = band_summary(band)
    summary.update(alpha=config.alpha, bandwidth=h, estimator=args.estimator, design=args.design, noise=args.noise,
                   delta=args.delta, replicate=args.replicate, sample_size=draw.n)
    write_json(out / "band.json", summary)
    hs = "none" if h is None else f"{h:.6g}"
    print(f"h = {hs}, c = {band.threshold:.6g}, area = {summary['area']:.6g}; wrote {out}")
    return EXIT_OK


def cmd_cv(args) -> int:
    config, population = _load(args)
    ctx = ExperimentContext(config, population)
    draw, probs, obs = _one_sample(ctx, args)
    weights = cv_weights(args.variant, draw, probs)
    h, table = select_bandwidth(ctx.bandwidths, obs, weights, config.kernel, ctx.smoothers)
    out = Path(config.output_dir)
    write_score_table(out / f"cv_{args.variant}.csv", table)
    print(f"selected h = {h:.6g} ({args.variant}); scores in {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config, population = _load(args)
    run = run_experiment(config, config.output_dir, population)
    for cell, table in run.summaries.items():
        print(cell.key)
        for row in table.rows:
            R = row.stats["R"][0]
            L = row.stats["L"][0]
            print(f"  {row.estimator:10s} R={R:10.4g} L={L:10.4g} coverage={row.coverage:.3f}"
                  f" failures={row.failures}")
    if run.failed:
        log.error("more than %.0f%% of replicates failed in some cell", 100 * config.max_failure_rate)
        return EXIT_FAILURES
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "stratify": cmd_stratify,
    "estimate": cmd_estimate,
    "cv": cmd_cv,
    "experiment": cmd_experiment,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DesignError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
