"""MAR (day-of-week driven) missingness simulation and diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, SeriesFormatError
from .series import TimeSeries, Weekday

__all__ = ["MarSpec", "MaskedSeries", "MissingnessReport", "apply_mar_mask", "describe_missingness"]


@dataclass(frozen=True)
class MarSpec:
    """Weekday/weekend missingness mechanism.

    ``weekend_share`` is the fraction of *all* masked entries that land on
    Saturdays or Sundays.
    """

    total_rate: float = 0.13
    weekend_share: float = 0.60
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.total_rate <= 1.0:
            raise ConfigError(f"total_rate must lie in [0, 1], got {self.total_rate}")
        if not 0.0 <= self.weekend_share <= 1.0:
            raise ConfigError(f"weekend_share must lie in [0, 1], got {self.weekend_share}")
        if int(self.seed) < 0:
            raise ConfigError("seed must be a non-negative integer")


@dataclass(frozen=True, eq=False)
class MaskedSeries:
    observed: TimeSeries
    holdout: dict[int, float]
    mask: np.ndarray
    warnings: tuple[str, ...] = ()

    def restore(self) -> TimeSeries:
        values = np.array(self.observed.values, dtype=float)
        for i, v in self.holdout.items():
            values[i] = v
        return self.observed.with_values(values)

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())


@dataclass
class MissingnessReport:
    by_weekday: dict[Weekday, int]
    total: int
    rate: float
    longest_gap: int
    warnings: list[str] = field(default_factory=list)

    @property
    def weekend_total(self) -> int:
        return self.by_weekday[Weekday.SATURDAY] + self.by_weekday[Weekday.SUNDAY]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "rate": self.rate,
            "by_weekday": {d.short: self.by_weekday[d] for d in Weekday},
            "longest_gap": self.longest_gap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _strata_quotas(n_miss: int, share: float, n_weekend: int, n_weekday: int):
    weekend = round(share * n_miss)
    weekday = n_miss - weekend
    notes = []
    if weekend > n_weekend:
        notes.append(
            f"weekend quota {weekend} exceeds {n_weekend} weekend days; "
            f"{weekend - n_weekend} spilled to weekdays"
        )
        weekday += weekend - n_weekend
        weekend = n_weekend
    if weekday > n_weekday:
        notes.append(
            f"weekday quota {weekday} exceeds {n_weekday} weekday days; "
            f"{weekday - n_weekday} spilled to weekends"
        )
        weekend += weekday - n_weekday
        weekday = n_weekday
    return weekend, weekday, notes


def apply_mar_mask(series: TimeSeries, spec: MarSpec) -> MaskedSeries:
    """Hide ``round(total_rate * n)`` entries, skewed toward weekends.

    Indices are drawn uniformly without replacement inside the weekend and
    weekday strata. Python's ``round`` (half-to-even) is applied to the total
    first and then to the weekend quota.
    """
    if series.n_missing:
        raise SeriesFormatError(
            f"series already has {series.n_missing} missing entries; masking needs a complete series"
        )
    n = len(series)
    n_miss = round(spec.total_rate * n)
    is_weekend = np.isin(series.weekdays(), [int(Weekday.SATURDAY), int(Weekday.SUNDAY)])
    weekend_idx = np.flatnonzero(is_weekend)
    weekday_idx = np.flatnonzero(~is_weekend)
    q_we, q_wd, notes = _strata_quotas(n_miss, spec.weekend_share, weekend_idx.size, weekday_idx.size)

    rng = np.random.default_rng(int(spec.seed))
    chosen = np.concatenate(
        [
            rng.choice(weekend_idx, size=q_we, replace=False),
            rng.choice(weekday_idx, size=q_wd, replace=False),
        ]
    ).astype(int)

    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    values = np.array(series.values, dtype=float)
    holdout = {int(i): float(values[i]) for i in np.sort(chosen)}
    values[mask] = np.nan
    mask.setflags(write=False)
    return MaskedSeries(series.with_values(values), holdout, mask, tuple(notes))


def _longest_run(flags: np.ndarray) -> int:
    if not flags.any():
        return 0
    padded = np.concatenate([[0], flags.astype(np.int8), [0]])
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return int((stops - starts).max())


def describe_missingness(series: TimeSeries) -> MissingnessReport:
    days = series.weekdays()[series.missing]
    counts = np.bincount(days, minlength=7)
    total = int(series.n_missing)
    return MissingnessReport(
        by_weekday={d: int(counts[int(d)]) for d in Weekday},
        total=total,
        rate=total / len(series),
        longest_gap=_longest_run(series.missing),
    )
