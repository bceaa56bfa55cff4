"""Raw periodogram and greedy peak picking."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import SeriesFormatError
from .series import TimeSeries

__all__ = ["Periodogram", "periodogram", "top_peaks"]


@dataclass(frozen=True, eq=False)
class Periodogram:
    """Ordinates on the Fourier grid ``j/n``, ``j = 1 .. n//2``."""

    frequencies: np.ndarray
    power: np.ndarray
    n: int

    def weights(self) -> np.ndarray:
        """Multiplicity of each ordinate in the two-sided sum (Nyquist counts once)."""
        w = np.full(self.power.size, 2.0)
        if self.n % 2 == 0:
            w[-1] = 1.0
        return w

    def total_power(self) -> float:
        return float(np.sum(self.weights() * self.power))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frequency", "period_days", "power"])
        for f, p in zip(self.frequencies, self.power):
            writer.writerow([format(f, ".17g"), format(1.0 / f, ".17g"), format(p, ".17g")])
        return buf.getvalue()


def periodogram(series) -> Periodogram:
    """Periodogram ``|sum_t (x_t - mean) exp(-2i pi f t)|**2 / n``, DC excluded.

    Missing entries are replaced by the observed mean before transforming;
    this is only meant for nominating peaks.
    """
    x = np.array(series.values if isinstance(series, TimeSeries) else series, dtype=float).reshape(-1)
    n = x.size
    if n < 4:
        raise SeriesFormatError(f"periodogram needs at least 4 samples, got {n}")
    valid = ~np.isnan(x)
    if not valid.any():
        raise SeriesFormatError("periodogram of an all-missing series is undefined")
    mean = x[valid].mean()
    centered = np.where(valid, x - mean, 0.0)
    spec = np.fft.rfft(centered)
    j = np.arange(1, n // 2 + 1)
    power = np.abs(spec[j]) ** 2 / n
    return Periodogram(frequencies=j / n, power=power, n=n)


def top_peaks(pg: Periodogram, count: int, min_separation: float = 0.0) -> list[float]:
    """Up to ``count`` local-maximum frequencies in descending power.

    Peaks closer than ``min_separation`` to an already selected peak are
    skipped. Equal powers are ordered by frequency, lowest first.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    p = pg.power
    if p.size == 0:
        return []
    left = np.concatenate([[-np.inf], p[:-1]])
    right = np.concatenate([p[1:], [-np.inf]])
    scale = p.max()
    if scale <= 0:
        return []
    is_peak = (p >= left) & (p >= right) & (p > scale * 1e-12)
    idx = np.flatnonzero(is_peak)
    # quantise so float noise does not break exact ties
    key = np.round(p[idx] / scale, 10)
    order = idx[np.lexsort((pg.frequencies[idx], -key))]

    chosen: list[float] = []
    for i in order:
        f = float(pg.frequencies[i])
        if all(abs(f - c) >= min_separation for c in chosen):
            chosen.append(f)
            if len(chosen) == count:
                break
    return chosen
