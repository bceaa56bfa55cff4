"""Kolmogorov-Zurbenko smoothing and KZFT bandpass extraction.

Every routine takes a 1-D array (NaN marks a missing entry) or a
:class:`~periodica.series.TimeSeries` and returns the same kind. Each moving
average pass averages the non-missing points inside a centered window that
shrinks at the series ends; a position with no valid neighbour stays missing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import ConfigError
from .series import TimeSeries

__all__ = [
    "KzParams",
    "KzftParams",
    "kz_smooth",
    "kzft_bandpass",
    "transfer_gain",
    "KZFilter",
    "KZFTBandpass",
]


@dataclass(frozen=True)
class KzParams:
    m: int
    k: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1 or self.m % 2 == 0:
            raise ConfigError(f"window m must be an odd positive integer, got {self.m}")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"iterations k must be a positive integer, got {self.k}")


@dataclass(frozen=True)
class KzftParams(KzParams):
    nu: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.nu <= 0.5:
            raise ConfigError(f"frequency nu must lie in [0, 0.5] cycles/sample, got {self.nu}")


def _as_array(x):
    if isinstance(x, TimeSeries):
        return np.array(x.values, dtype=float), x
    arr = np.asarray(x)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    return arr.reshape(-1), None


def _wrap(values, template):
    if template is None:
        return values
    return template.with_values(values)


def _ma_pass(x: np.ndarray, m: int) -> np.ndarray:
    valid = ~np.isnan(x)
    half = m // 2
    n = x.size
    kern = np.ones(m)
    total = np.convolve(np.where(valid, x, 0), kern)[half : half + n]
    count = np.convolve(valid.astype(float), kern)[half : half + n]
    out = np.full(n, np.nan, dtype=total.dtype)
    ok = count > 0
    out[ok] = total[ok] / count[ok]
    return out


def kz_smooth(series, params: KzParams):
    """Apply ``k`` passes of a centered width-``m`` moving average.

    Works on real or complex input; missing points are skipped and each
    window is renormalised by its count of valid points.
    """
    x, template = _as_array(series)
    for _ in range(params.k):
        x = _ma_pass(x, params.m)
    return _wrap(x, template)


def kzft_bandpass(series, params: KzftParams):
    """Extract the component of ``series`` near frequency ``params.nu``.

    The series is demodulated by ``exp(-2i*pi*nu*t)``, KZ-smoothed, and
    remodulated; the real part (doubled for ``nu > 0``) is returned.
    """
    x, template = _as_array(series)
    if params.nu > 0.5:
        raise ConfigError("nu above Nyquist")
    t = np.arange(x.size)
    if params.nu == 0.0:
        z = kz_smooth(x.astype(complex), params)
        y = z.real
    else:
        carrier = np.exp(-2j * np.pi * params.nu * t)
        z = kz_smooth(x * carrier, params)
        y = 2.0 * (z * np.conj(carrier)).real
    return _wrap(y, template)


def transfer_gain(m: int, k: int, f):
    """Gain ``|sin(pi m f) / (m sin(pi f))|**k`` of a k-fold width-m average.

    ``f`` is the frequency offset in cycles/sample; the removable singularity
    at integer ``f`` evaluates to 1.
    """
    f = np.asarray(f, dtype=float)
    den = m * np.sin(np.pi * f)
    num = np.sin(np.pi * m * f)
    tiny = np.abs(np.sin(np.pi * f)) < 1e-15
    ratio = np.where(tiny, 1.0, num / np.where(tiny, 1.0, den))
    g = np.abs(ratio) ** k
    return float(g) if g.ndim == 0 else g


class KZFilter(TransformerMixin, BaseEstimator):
    """Column-wise KZ smoother with the scikit-learn transformer API.

    Parameters
    ----------
    window : int, default=21
        Odd moving-average width.
    iterations : int, default=1
        Number of passes.
    """

    def __init__(self, window=21, iterations=1):
        self.window = window
        self.iterations = iterations

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan")
        KzParams(self.window, self.iterations)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X, ensure_all_finite="allow-nan")
        params = KzParams(self.window, self.iterations)
        return np.column_stack([kz_smooth(col, params) for col in X.T])


class KZFTBandpass(TransformerMixin, BaseEstimator):
    """Column-wise KZFT bandpass filter centred on ``frequency``."""

    def __init__(self, frequency=1 / 365, window=731, iterations=1):
        self.frequency = frequency
        self.window = window
        self.iterations = iterations

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan")
        KzftParams(self.window, self.iterations, self.frequency)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X, ensure_all_finite="allow-nan")
        params = KzftParams(self.window, self.iterations, self.frequency)
        return np.column_stack([kzft_bandpass(col, params) for col in X.T])
