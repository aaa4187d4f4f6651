"""Experiment configuration read from INI-style files."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError
from .population import DEFAULT_MODE_VARIANCES, DEFAULT_AR3_COEFFICIENTS
from .smooth import Kernel

__all__ = ["ExperimentConfig", "ESTIMATORS", "DESIGNS", "NOISE_MODELS", "load_config"]

ESTIMATORS = ("lin", "cv", "wcv", "oracle_h", "oracle_mu")
DESIGNS = ("srswor", "stratified")
NOISE_MODELS = ("heteroscedastic", "ar3")
CV_CHOICES = ("unweighted", "opsomer_miller", "opsomer_miller_design")

# section -> keys accepted in that section
_SECTIONS = {
    "population": ("N", "d", "T", "variances", "population_seed"),
    "design": ("n", "designs", "cuts", "allocation"),
    "noise": ("models", "deltas", "ar_coefficients"),
    "smoothing": ("kernel", "bandwidth_count", "bandwidth_low", "bandwidth_high", "cv_variant"),
    "bands": ("alpha", "B"),
    "experiment": ("M", "seed", "workers", "estimators", "output_dir", "max_failure_rate"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one Monte Carlo study.

    Defaults are the desk-scale study; :meth:`full_scale` gives the large one.
    ``population_seed`` of ``None`` reuses the master ``seed``. An empty
    ``allocation`` means Neyman allocation from the population itself.
    """

    N: int = 2000
    d: int = 100
    T: float = 1.0
    variances: Tuple[float, ...] = DEFAULT_MODE_VARIANCES
    population_seed: Optional[int] = None
    n: int = 200
    designs: Tuple[str, ...] = DESIGNS
    cuts: Tuple[float, ...] = (0.5, 0.85)
    allocation: Tuple[int, ...] = ()
    models: Tuple[str, ...] = NOISE_MODELS
    deltas: Tuple[float, ...] = (0.05, 0.25)
    ar_coefficients: Tuple[float, ...] = DEFAULT_AR3_COEFFICIENTS
    kernel: str = Kernel.EPANECHNIKOV.value
    bandwidth_count: int = 20
    bandwidth_low: Optional[float] = None
    bandwidth_high: Optional[float] = None
    cv_variant: str = "opsomer_miller"
    alpha: float = 0.05
    B: int = 2000
    M: int = 200
    seed: int = 0
    workers: int = 1
    estimators: Tuple[str, ...] = ESTIMATORS
    output_dir: str = "results"
    max_failure_rate: float = 0.10

    def __post_init__(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.M < 1:
            bad("M must be at least 1")
        if self.N < 2 or self.d < 2:
            bad("need N >= 2 and d >= 2")
        if not 0 < self.n <= self.N:
            bad(f"need 0 < n <= N, got n={self.n}, N={self.N}")
        if not self.T > 0:
            bad("T must be positive")
        if self.B < 1:
            bad("B must be at least 1")
        if not 0 < self.alpha < 1:
            bad("alpha must lie in (0, 1)")
        if self.workers < 1:
            bad("workers must be at least 1")
        if self.seed < 0 or (self.population_seed is not None and self.population_seed < 0):
            bad("seeds must be non-negative")
        if self.bandwidth_count < 1:
            bad("bandwidth_count must be at least 1")
        if not 0 <= self.max_failure_rate <= 1:
            bad("max_failure_rate must lie in [0, 1]")
        for name, allowed in (("estimators", ESTIMATORS), ("designs", DESIGNS), ("models", NOISE_MODELS)):
            values = getattr(self, name)
            if not values:
                bad(f"{name} must not be empty")
            unknown = [v for v in values if v not in allowed]
            if unknown:
                bad(f"unknown {name}: {unknown}; choose from {list(allowed)}")
            if len(set(values)) != len(values):
                bad(f"duplicate entries in {name}")
        if self.cv_variant not in CV_CHOICES:
            bad(f"cv_variant must be one of {list(CV_CHOICES)}")
        try:
            Kernel(self.kernel)
        except ValueError:
            bad(f"unknown kernel {self.kernel!r}")
        if any(not v >= 0 for v in self.deltas) or not self.deltas:
            bad("deltas must be a non-empty list of non-negative numbers")
        if len(self.ar_coefficients) != 3:
            bad("ar_coefficients needs exactly three values")
        cuts = self.cuts
        if any(not 0 < c < 1 for c in cuts) or any(b <= a for a, b in zip(cuts, cuts[1:])):
            bad("cuts must be strictly increasing inside (0, 1)")
        if self.allocation:
            if len(self.allocation) != len(cuts) + 1:
                bad(f"allocation needs {len(cuts) + 1} stratum sizes")
            if sum(self.allocation) != self.n:
                bad(f"allocation sums to {sum(self.allocation)}, expected n={self.n}")

    @classmethod
    def full_scale(cls, **overrides) -> "ExperimentConfig":
        """The full-size study (slow: hours on one core)."""
        base = dict(N=20000, n=1000, d=200, cuts=(0.5, 0.7, 0.85, 0.95), M=1000, B=10000)
        base.update(overrides)
        return cls(**base)

    @property
    def pop_seed(self) -> int:
        return self.seed if self.population_seed is None else self.population_seed

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}

    def to_ini(self) -> str:
        lines = []
        values = self.to_dict()
        for section, keys in _SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                v = values[key]
                if v is None or v == []:
                    continue
                text = ", ".join(str(x) for x in v) if isinstance(v, list) else str(v)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)


def _field_types() -> Dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, text: str, default: Any) -> Any:
    text = text.strip()
    try:
        if isinstance(default, tuple):
            items = [s.strip() for s in text.replace(";", ",").split(",") if s.strip()]
            if key in ("designs", "models", "estimators"):
                return tuple(items)
            if key == "allocation":
                return tuple(int(s) for s in items)
            return tuple(float(s) for s in items)
        if key in ("population_seed", "bandwidth_low", "bandwidth_high"):
            if text.lower() in ("", "none", "auto"):
                return None
            return int(text) if key == "population_seed" else float(text)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {text!r}: {exc}") from None


def parse_ini(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Apply the settings in ``text`` on top of ``base`` (desk defaults when omitted)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (N vs n)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    base = base or ExperimentConfig()
    defaults = _field_types()
    changes: Dict[str, Any] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            changes[key] = _parse_value(key, raw, defaults[key])
    return base.replace(**changes)


def load_config(path=None, full_scale: bool = False,
                overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (skipping ``None`` values)."""
    try:
        base = ExperimentConfig.full_scale() if full_scale else ExperimentConfig()
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            base = parse_ini(text, base)
        extra = {k: v for k, v in (overrides or {}).items() if v is not None}
        return base.replace(**extra) if extra else base
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
