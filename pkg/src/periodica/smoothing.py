"""Post-imputation smoothers: centered moving average and LOESS."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, SeriesFormatError
from .series import TimeSeries

__all__ = ["LoessParams", "moving_average", "loess", "tricube", "MovingAverageSmoother", "LoessSmoother"]


@dataclass(frozen=True)
class LoessParams:
    span: float = 0.1
    degree: int = 1

    def __post_init__(self):
        if not 0.0 < self.span <= 1.0:
            raise ConfigError(f"span must lie in (0, 1], got {self.span}")
        if self.degree not in (1, 2):
            raise ConfigError(f"degree must be 1 or 2, got {self.degree}")


def _complete(series):
    if isinstance(series, TimeSeries):
        if series.n_missing:
            raise SeriesFormatError("smoothing needs a complete series; impute first")
        return np.array(series.values, dtype=float), series
    x = np.asarray(series, dtype=float).reshape(-1)
    if np.isnan(x).any():
        raise SeriesFormatError("smoothing needs a complete series; impute first")
    return x, None


def moving_average(series, w: int = 29):
    """Centered mean over ``w`` points; windows shrink at the ends."""
    x, template = _complete(series)
    if w < 1 or w % 2 == 0:
        raise ConfigError(f"moving-average window must be odd and positive, got {w}")
    if w > x.size:
        raise ConfigError(f"window {w} longer than series ({x.size})")
    half = w // 2
    kern = np.ones(w)
    total = np.convolve(x, kern)[half : half + x.size]
    count = np.convolve(np.ones_like(x), kern)[half : half + x.size]
    out = total / count
    return out if template is None else template.with_values(out)


def tricube(d):
    d = np.clip(np.abs(np.asarray(d, dtype=float)), 0.0, 1.0)
    return (1.0 - d**3) ** 3


def loess(series, params: LoessParams = LoessParams()):
    """Local weighted polynomial fit at every index, no robustness passes.

    Each fit uses the ``ceil(span * n)`` nearest indices with tricube weights
    scaled by the largest distance in the window.
    """
    y, template = _complete(series)
    n = y.size
    q = min(n, math.ceil(params.span * n))
    if q < params.degree + 2:
        raise ConfigError(f"span {params.span} leaves {q} points; need at least {params.degree + 2}")

    fitted = np.empty(n)
    fallback = 0
    for t in range(n):
        lo = min(max(t - (q - 1) // 2, 0), n - q)
        idx = np.arange(lo, lo + q)
        d = idx - t
        dmax = np.abs(d).max()
        w = tricube(d / dmax)
        design = np.vander(d.astype(float), params.degree + 1, increasing=True)
        sw = np.sqrt(w)
        coef, _, rank, _ = np.linalg.lstsq(design * sw[:, None], y[idx] * sw, rcond=None)
        if rank < params.degree + 1:
            fallback += 1
            fitted[t] = np.sum(w * y[idx]) / np.sum(w)
        else:
            fitted[t] = coef[0]
    if fallback:
        warnings.warn(f"loess: {fallback} singular local fits replaced by weighted means", RuntimeWarning)
    return fitted if template is None else template.with_values(fitted)


class MovingAverageSmoother(TransformerMixin, BaseEstimator):
    def __init__(self, window=29):
        self.window = window

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        return np.column_stack([moving_average(c, self.window) for c in X.T])


class LoessSmoother(TransformerMixin, BaseEstimator):
    def __init__(self, span=0.1, degree=1):
        self.span = span
        self.degree = degree

    def fit(self, X, y=None):
        X = check_array(X)
        LoessParams(self.span, self.degree)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        params = LoessParams(self.span, self.degree)
        return np.column_stack([loess(c, params) for c in X.T])
