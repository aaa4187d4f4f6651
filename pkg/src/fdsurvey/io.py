"""Reading and writing curves, tables and bands (CSV, JSON and a small binary format)."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .bands import ConfidenceBand, band_area
from .errors import ConfigError
from .estimate import CovarianceEstimate, MeanEstimate
from .numerics import TimeGrid
from .population import CurvePopulation, ObservationMatrix

__all__ = [
    "fmt",
    "write_curves_csv",
    "read_curves_csv",
    "write_curves_binary",
    "read_curves_binary",
    "write_population",
    "read_population",
    "write_observations",
    "write_strata_csv",
    "read_strata_csv",
    "write_allocation_csv",
    "write_mean_csv",
    "write_band_csv",
    "band_summary",
    "write_json",
    "write_matrix_csv",
    "write_covariance",
    "write_score_table",
    "write_table_csv",
]

MAGIC = b"FSRV1"
_HEADER = struct.Struct("<QQ")


def fmt(x) -> str:
    """Shortest round-trip text for a number; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_curves_csv(path, grid: TimeGrid, values: np.ndarray, units=None) -> Path:
    """One row per curve: ``unit`` then one column per grid time."""
    values = np.asarray(values, dtype=float)
    units = np.arange(values.shape[0]) if units is None else np.asarray(units)
    header = ["unit"] + [fmt(t) for t in grid.points]
    return _write_rows(path, header, ([int(u)] + row.tolist() for u, row in zip(units, values)))


def read_curves_csv(path) -> Tuple[TimeGrid, np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "unit":
        raise ConfigError(f"{path}: expected a header starting with 'unit'")
    try:
        grid = TimeGrid(np.array([float(t) for t in rows[0][1:]]))
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if body.ndim != 2 or body.shape[1] != grid.d + 1:
        raise ConfigError(f"{path}: every row needs a unit and {grid.d} values")
    return grid, body[:, 1:], body[:, 0].astype(np.int64)


def write_curves_binary(path, grid: TimeGrid, values: np.ndarray) -> Path:
    """``FSRV1`` magic, row and column counts, grid, then row-major float64 data."""
    values = np.ascontiguousarray(values, dtype="<f8")
    rows, cols = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(rows, cols))
        fh.write(np.asarray(grid.points, dtype="<f8").tobytes())
        fh.write(values.tobytes())
    return path


def read_curves_binary(path) -> Tuple[TimeGrid, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ConfigError(f"{path}: not an FSRV1 file")
    off = len(MAGIC)
    rows, cols = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    need = off + 8 * cols * (rows + 1)
    if len(data) != need:
        raise ConfigError(f"{path}: expected {need} bytes, found {len(data)}")
    grid = TimeGrid(np.frombuffer(data, "<f8", cols, off).astype(float))
    values = np.frombuffer(data, "<f8", rows * cols, off + 8 * cols).reshape(rows, cols).astype(float)
    return grid, values


def write_population(path, pop: CurvePopulation) -> Path:
    """CSV, or the binary format when the suffix is ``.fsrv``."""
    if Path(path).suffix == ".fsrv":
        return write_curves_binary(path, pop.grid, pop.curves)
    return write_curves_csv(path, pop.grid, pop.curves)


def read_population(path) -> CurvePopulation:
    if Path(path).suffix == ".fsrv":
        grid, values = read_curves_binary(path)
        return CurvePopulation(grid, values)
    grid, values, units = read_curves_csv(path)
    if not np.array_equal(units, np.arange(units.size)):
        raise ConfigError(f"{path}: population rows must be units 0..N-1 in order")
    return CurvePopulation(grid, values)


def write_observations(path, obs: ObservationMatrix) -> Path:
    return write_curves_csv(path, obs.grid, obs.values, obs.units)


def write_strata_csv(path, labels) -> Path:
    labels = np.asarray(labels)
    return _write_rows(path, ["unit", "stratum"], ((k, int(g)) for k, g in enumerate(labels)))


def read_strata_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["unit", "stratum"]:
        raise ConfigError(f"{path}: expected header 'unit,stratum'")
    pairs = np.array([[int(a), int(b)] for a, b in rows[1:]], dtype=np.int64)
    order = np.argsort(pairs[:, 0])
    if not np.array_equal(pairs[order, 0], np.arange(pairs.shape[0])):
        raise ConfigError(f"{path}: units must be 0..N-1")
    return pairs[order, 1]


def write_allocation_csv(path, Nh, nh, Sh=None) -> Path:
    """Per-stratum population size, sample size and (optionally) dispersion."""
    header = ["stratum", "size", "allocation"] + (["dispersion"] if Sh is not None else [])
    rows = []
    for g in range(len(Nh)):
        row = [g + 1, int(Nh[g]), int(nh[g])]
        if Sh is not None:
            row.append(float(Sh[g]))
        rows.append(row)
    return _write_rows(path, header, rows)


def write_mean_csv(path, est: MeanEstimate) -> Path:
    return _write_rows(path, ["t", "mean"], zip(est.grid.points.tolist(), est.values.tolist()))


def write_band_csv(path, band: ConfidenceBand) -> Path:
    cols = zip(band.grid.points.tolist(), band.center.tolist(), band.lower.tolist(), band.upper.tolist())
    return _write_rows(path, ["t", "center", "lower", "upper"], cols)


def band_summary(band: ConfidenceBand) -> dict:
    return {
        "threshold": band.threshold,
        "level": band.level,
        "replicates": band.replicates,
        "area": band_area(band, "unscaled"),
        "area_width": band_area(band, "width"),
        "clipped_mass": band.diagnostics.clipped_mass,
        "negative_eigenvalues": band.diagnostics.n_negative,
        "min_eigenvalue": band.diagnostics.min_eigenvalue,
        "clipped_variance_points": band.clipped_variance,
    }


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    return obj


def write_json(path, payload) -> Path:
    """Deterministic JSON: sorted keys, NaN written as ``null``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=1, allow_nan=False) + "\n")
    return path


def write_matrix_csv(path, grid: TimeGrid, matrix: np.ndarray) -> Path:
    header = ["t"] + [fmt(t) for t in grid.points]
    return _write_rows(path, header, ([t] + row.tolist() for t, row in zip(grid.points.tolist(), matrix)))


def write_covariance(path, cov: CovarianceEstimate) -> Path:
    if Path(path).suffix == ".fsrv":
        return write_curves_binary(path, cov.grid, cov.matrix)
    return write_matrix_csv(path, cov.grid, cov.matrix)


def write_score_table(path, table: Sequence[Tuple[float, float]]) -> Path:
    return _write_rows(path, ["h", "score"], table)


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return _write_rows(path, header, rows)
