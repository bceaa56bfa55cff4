"""Daily time series container, calendar helpers and CSV I/O.

A :class:`TimeSeries` is a start date plus an ordered run of daily values.
Missing entries are tracked by an explicit boolean mask; the value array holds
NaN at those positions only as a placeholder, and NaN/inf supplied as data is
rejected.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import SeriesFormatError

__all__ = [
    "TimeSeries",
    "Weekday",
    "parse_series",
    "weekday_of",
    "write_series",
    "day_count",
]

MISSING_TOKENS = frozenset({"", "NA", "na", "NaN", "nan", "null", "NULL"})


class Weekday(enum.IntEnum):
    SUNDAY = 0
    MONDAY = 1
    TUESDAY = 2
    WEDNESDAY = 3
    THURSDAY = 4
    FRIDAY = 5
    SATURDAY = 6

    @property
    def is_weekend(self) -> bool:
        return self in (Weekday.SATURDAY, Weekday.SUNDAY)

    @property
    def short(self) -> str:
        return self.name[:3].title()


def weekday_of(date: dt.date) -> Weekday:
    """Day of week of a Gregorian date (Sunday-first numbering)."""
    return Weekday((date.weekday() + 1) % 7)


def day_count(start: dt.date, end: dt.date) -> int:
    """Number of days from ``start`` to ``end`` inclusive."""
    return (end - start).days + 1


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly spaced daily series with explicit missing entries.

    Parameters
    ----------
    start_date : datetime.date
        Date of index 0.
    values : array-like of float or None
        ``None`` (or NaN) marks a missing entry. Infinite values are rejected.
    """

    start_date: dt.date
    values: np.ndarray
    missing: np.ndarray = field(init=False)

    def __init__(self, start_date: dt.date, values: Iterable[Optional[float]]):
        if isinstance(start_date, dt.datetime):
            start_date = start_date.date()
        raw = [np.nan if v is None else v for v in values]
        arr = np.array(raw, dtype=float).reshape(-1)
        if arr.size < 1:
            raise SeriesFormatError("a series needs at least one entry")
        if np.isinf(arr).any():
            raise SeriesFormatError("infinite values are not valid observations")
        miss = np.isnan(arr)
        arr.setflags(write=False)
        miss.setflags(write=False)
        object.__setattr__(self, "start_date", start_date)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "missing", miss)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.start_date == other.start_date
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.values[~self.missing], other.values[~other.missing])
        )

    def __repr__(self) -> str:
        return (
            f"TimeSeries(start_date={self.start_date.isoformat()}, n={len(self)}, "
            f"n_missing={self.n_missing})"
        )

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    @property
    def end_date(self) -> dt.date:
        return self.date_at(len(self) - 1)

    def date_at(self, i: int) -> dt.date:
        return self.start_date + dt.timedelta(days=int(i))

    @property
    def dates(self) -> list[dt.date]:
        return [self.date_at(i) for i in range(len(self))]

    def weekdays(self) -> np.ndarray:
        """Weekday code (Sunday=0) of every index."""
        first = int(weekday_of(self.start_date))
        return (first + np.arange(len(self))) % 7

    def to_list(self) -> list[Optional[float]]:
        return [None if m else float(v) for v, m in zip(self.values, self.missing)]

    def with_values(self, values: Sequence[Optional[float]] | np.ndarray) -> "TimeSeries":
        return TimeSeries(self.start_date, values)


def _parse_date(text: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise SeriesFormatError(f"row {row}: date {text!r} is not ISO-8601 (YYYY-MM-DD)") from None


def parse_series(
    csv_text: str, date_column: str = "date", value_column: str = "value"
) -> TimeSeries:
    """Parse CSV text into a :class:`TimeSeries`.

    Empty cells and ``NA`` yield missing entries. Rows must be strictly
    consecutive calendar days.

    Raises
    ------
    SeriesFormatError
        On a missing column, duplicate date, gap, out-of-order date, or a
        value that is not a finite number. Row numbers count the header as
        row 1.
    """
    reader = csv.DictReader(io.StringIO(csv_text, newline=""))
    if reader.fieldnames is None:
        raise SeriesFormatError("empty CSV: header row required")
    fields = [f.strip() for f in reader.fieldnames]
    reader.fieldnames = fields
    for col in (date_column, value_column):
        if col not in fields:
            raise SeriesFormatError(f"column {col!r} not found in header {fields}")

    start: Optional[dt.date] = None
    prev: Optional[dt.date] = None
    values: list[Optional[float]] = []
    for row_no, row in enumerate(reader, start=2):
        date = _parse_date(row[date_column] or "", row_no)
        if prev is not None:
            step = (date - prev).days
            if step == 0:
                raise SeriesFormatError(f"row {row_no}: duplicate date {date.isoformat()}")
            if step < 0:
                raise SeriesFormatError(
                    f"row {row_no}: non-daily spacing, {date.isoformat()} after {prev.isoformat()}"
                )
            if step > 1:
                gap = prev + dt.timedelta(days=1)
                raise SeriesFormatError(f"gap at {gap.isoformat()}")
        else:
            start = date
        prev = date

        cell = (row[value_column] or "").strip()
        if cell in MISSING_TOKENS:
            values.append(None)
            continue
        try:
            v = float(cell)
        except ValueError:
            raise SeriesFormatError(f"row {row_no}: unparsable value {cell!r}") from None
        if not math.isfinite(v):
            raise SeriesFormatError(f"row {row_no}: non-finite value {cell!r}")
        values.append(v)

    if start is None:
        raise SeriesFormatError("CSV has a header but no data rows")
    return TimeSeries(start, values)


def format_value(v: float) -> str:
    return format(v, ".17g")


def write_series(series: TimeSeries, value_column: str = "value", date_column: str = "date") -> str:
    """Serialize to CSV text; missing entries become empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([date_column, value_column])
    for i, (v, m) in enumerate(zip(series.values, series.missing)):
        writer.writerow([series.date_at(i).isoformat(), "" if m else format_value(float(v))])
    return buf.getvalue()


def read_series_file(path, date_column: str = "date", value_column: str = "value") -> TimeSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_series(fh.read(), date_column, value_column)
