"""Variable bandpass periodic block bootstrap.

A periodic component is isolated by summing KZFT bandpass outputs at the
harmonics ``h/p`` of its period ``p``. The filtered series is cut into
phase-aligned blocks of length ``p`` which are resampled with replacement;
per-phase means of the replicates give a confidence band for the periodic
mean, a significance verdict, and a median profile that is later tiled into
an auxiliary covariate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._parallel import ordered_map
from .exceptions import ConfigError, SeriesFormatError
from .kzfilter import KzftParams, kzft_bandpass
from .series import TimeSeries

__all__ = [
    "ComponentSpec",
    "PcSeries",
    "BootstrapConfig",
    "CiBand",
    "MedianVector",
    "PeriodicComponent",
    "DEFAULT_COMPONENTS",
    "extract_component",
    "phase_blocks",
    "bootstrap_replicates",
    "phase_means",
    "periodic_mean_ci",
    "significance_test",
    "median_vector",
    "tile_median",
    "analyze_component",
    "component_seed",
    "split_harmonics",
    "PeriodicComponentExtractor",
]


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    period: int
    harmonics: tuple[int, ...]
    window: int
    iterations: int = 1

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple(int(h) for h in self.harmonics))
        if int(self.period) != self.period or self.period < 2:
            raise ConfigError(f"{self.name}: period must be an integer >= 2")
        if not self.harmonics or min(self.harmonics) < 1:
            raise ConfigError(f"{self.name}: harmonics must be positive integers")
        if max(self.harmonics) / self.period > 0.5:
            raise ConfigError(f"{self.name}: harmonic {max(self.harmonics)}/{self.period} above Nyquist")
        # validates window/iterations
        self.filter_params(self.harmonics[0])

    def filter_params(self, harmonic: int) -> KzftParams:
        return KzftParams(m=self.window, k=self.iterations, nu=harmonic / self.period)

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(h / self.period for h in self.harmonics)


DEFAULT_COMPONENTS = (
    ComponentSpec("yearly", 365, (1, 2, 3, 4, 5, 6), 731),
    ComponentSpec("monthly", 30, (1, 2, 3), 101),
    ComponentSpec("weekly", 7, (1, 2, 3), 21),
)


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 200
    seed: int = 0
    ci_level: float = 0.95

    def __post_init__(self):
        if self.replicates < 2:
            raise ConfigError("bootstrap needs at least 2 replicates")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("ci_level must lie strictly between 0 and 1")


@dataclass(frozen=True, eq=False)
class PcSeries:
    values: np.ndarray
    spec: ComponentSpec


@dataclass(frozen=True, eq=False)
class CiBand:
    lower: np.ndarray
    point: np.ndarray
    upper: np.ndarray

    @property
    def period(self) -> int:
        return self.point.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phase", "lower", "point", "upper"])
        for i in range(self.period):
            w.writerow([i] + [format(float(a[i]), ".17g") for a in (self.lower, self.point, self.upper)])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class MedianVector:
    values: np.ndarray

    @property
    def period(self) -> int:
        return self.values.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phase", "median"])
        for i, v in enumerate(self.values):
            w.writerow([i, format(float(v), ".17g")])
        return buf.getvalue()


@dataclass(eq=False)
class PeriodicComponent:
    """Everything computed for one named component."""

    spec: ComponentSpec
    pc: PcSeries
    band: CiBand
    significant: bool
    median: MedianVector
    warnings: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.spec.name

    def summary(self) -> dict:
        return {
            "name": self.spec.name,
            "period": self.spec.period,
            "harmonics": list(self.spec.harmonics),
            "window": self.spec.window,
            "iterations": self.spec.iterations,
            "significant": bool(self.significant),
            "max_lower": float(self.band.lower.max()),
            "min_upper": float(self.band.upper.min()),
            "median": [float(v) for v in self.median.values],
        }


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return np.array(series.values, dtype=float)
    return np.asarray(series, dtype=float).reshape(-1)


def extract_component(series, spec: ComponentSpec) -> PcSeries:
    """Sum of KZFT bandpass outputs at every harmonic of ``spec``."""
    x = _values(series)
    if x.size <= spec.window:
        raise SeriesFormatError(
            f"{spec.name}: series length {x.size} must exceed filter window {spec.window}"
        )
    total = np.zeros(x.size)
    for h in spec.harmonics:
        total += kzft_bandpass(x, spec.filter_params(h))
    if np.isnan(total).any():
        first = int(np.flatnonzero(np.isnan(total))[0])
        raise SeriesFormatError(
            f"{spec.name}: a gap at index {first} is wider than the filter support"
        )
    total.setflags(write=False)
    return PcSeries(total, spec)


def phase_blocks(pc: PcSeries | np.ndarray, period: Optional[int] = None) -> np.ndarray:
    """Complete period-length blocks starting at phase 0, shape ``(n//p, p)``.

    A trailing partial block is dropped.
    """
    if isinstance(pc, PcSeries):
        values, period = pc.values, pc.spec.period
    else:
        values = np.asarray(pc, dtype=float)
    if period is None:
        raise ValueError("period is required for raw arrays")
    n_blocks = values.size // period
    if n_blocks < 1:
        raise SeriesFormatError(f"series of length {values.size} is shorter than one period ({period})")
    return np.array(values[: n_blocks * period]).reshape(n_blocks, period)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def bootstrap_replicates(blocks: np.ndarray, n: int, cfg: BootstrapConfig) -> np.ndarray:
    """Draw ``cfg.replicates`` series of length ``n`` from the block pool.

    Each replicate concatenates ``ceil(n/p)`` blocks drawn uniformly with
    replacement and truncates to ``n``. Replicate ``r`` is seeded from
    ``(cfg.seed, r)`` alone.
    """
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    n_blocks, p = blocks.shape
    n_draw = math.ceil(n / p)

    def one(r: int) -> np.ndarray:
        picks = replicate_rng(cfg.seed, r).integers(0, n_blocks, size=n_draw)
        return blocks[picks].reshape(-1)[:n]

    return np.stack(ordered_map(one, range(cfg.replicates)))


def phase_means(ensemble: np.ndarray, p: int) -> np.ndarray:
    """Per-replicate mean at each phase ``t mod p``; shape ``(B, p)``."""
    ens = np.atleast_2d(np.asarray(ensemble, dtype=float))
    b, n = ens.shape
    n_cycles = math.ceil(n / p)
    padded = np.full((b, n_cycles * p), np.nan)
    padded[:, :n] = ens
    with np.errstate(invalid="ignore"):
        return np.nanmean(padded.reshape(b, n_cycles, p), axis=1)


def periodic_mean_ci(ensemble: np.ndarray, p: int, ci_level: float = 0.95) -> CiBand:
    """Percentile interval of the per-phase replicate means.

    The interval is widened where necessary so that it always contains the
    point estimate (the mean over replicates).
    """
    means = phase_means(ensemble, p)
    alpha = (1.0 - ci_level) / 2.0
    lower, upper = np.percentile(means, [100 * alpha, 100 * (1 - alpha)], axis=0)
    # a degenerate ensemble keeps its exact value; the float mean can drift by an ulp
    point = np.where(np.ptp(means, axis=0) == 0, means[0], means.mean(axis=0))
    return CiBand(np.minimum(lower, point), point, np.maximum(upper, point))


def significance_test(band: CiBand) -> bool:
    """True when the highest lower bound exceeds the lowest upper bound."""
    return bool(np.max(band.lower) > np.min(band.upper))


def median_vector(ensemble: np.ndarray, p: int) -> MedianVector:
    return MedianVector(np.median(phase_means(ensemble, p), axis=0))


def tile_median(mv: MedianVector | np.ndarray, n: int, start_phase: int = 0) -> np.ndarray:
    v = mv.values if isinstance(mv, MedianVector) else np.asarray(mv, dtype=float)
    return v[(start_phase + np.arange(n)) % v.size]


def analyze_component(series, spec: ComponentSpec, cfg: BootstrapConfig, demean: bool = True) -> PeriodicComponent:
    """Filter, bootstrap and test one component.

    With ``demean`` the observed mean is removed before filtering, so a large
    level cannot leak through filter sidelobes into the band.
    """
    x = _values(series)
    if demean:
        x = x - np.nanmean(x)
    pc = extract_component(x, spec)
    blocks = phase_blocks(pc)
    ensemble = bootstrap_replicates(blocks, pc.values.size, cfg)
    band = periodic_mean_ci(ensemble, spec.period, cfg.ci_level)
    notes = []
    if pc.values.size % spec.period:
        notes.append(
            f"{spec.name}: trailing {pc.values.size % spec.period} samples excluded from the block pool"
        )
    return PeriodicComponent(
        spec=spec,
        pc=pc,
        band=band,
        significant=significance_test(band),
        median=median_vector(ensemble, spec.period),
        warnings=notes,
    )


def split_harmonics(specs: Sequence[ComponentSpec]) -> list[ComponentSpec]:
    """One single-harmonic spec per harmonic, named ``<name>_h<h>``."""
    return [
        ComponentSpec(f"{s.name}_h{h}", s.period, (h,), s.window, s.iterations)
        for s in specs
        for h in s.harmonics
    ]


def component_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(1000 + int(index),)).generate_state(1)[0])


class PeriodicComponentExtractor(TransformerMixin, BaseEstimator):
    """Find significant periodic components and emit them as covariates.

    ``fit`` runs the filter/bootstrap/test cycle for every component on a
    single series (NaN marks missing days). ``transform`` returns one tiled
    median-profile column per significant component, phase-aligned to index
    0 of the input.

    Parameters
    ----------
    components : sequence of ComponentSpec, optional
        Defaults to yearly (365 d), monthly (30 d) and weekly (7 d).
    n_replicates : int, default=200
    ci_level : float, default=0.95
    random_state : int, default=0
    demean : bool, default=True
    per_harmonic : bool, default=False
        Test and emit each harmonic separately instead of summing them.
    """

    def __init__(
        self,
        components=None,
        n_replicates=200,
        ci_level=0.95,
        random_state=0,
        demean=True,
        per_harmonic=False,
    ):
        self.components = components
        self.n_replicates = n_replicates
        self.ci_level = ci_level
        self.random_state = random_state
        self.demean = demean
        self.per_harmonic = per_harmonic

    def _specs(self) -> list[ComponentSpec]:
        specs = list(DEFAULT_COMPONENTS if self.components is None else self.components)
        return split_harmonics(specs) if self.per_harmonic else specs

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, ensure_all_finite="allow-nan")
        x = X.reshape(-1) if X.ndim == 1 or X.shape[1] == 1 else None
        if x is None:
            raise ValueError("PeriodicComponentExtractor expects a single series")
        self.components_ = [
            analyze_component(
                x,
                spec,
                BootstrapConfig(self.n_replicates, component_seed(self.random_state, i), self.ci_level),
                demean=self.demean,
            )
            for i, spec in enumerate(self._specs())
        ]
        self.significant_ = [c.name for c in self.components_ if c.significant]
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, ensure_2d=False, ensure_all_finite="allow-nan")
        n = X.shape[0]
        cols = [tile_median(c.median, n) for c in self.components_ if c.significant]
        return np.column_stack(cols) if cols else np.empty((n, 0))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "components_")
        return np.array([f"comp_{name}" for name in self.significant_], dtype=object)
