"""Periodic-component assisted multiple imputation for daily time series."""

__version__ = "0.1.0"

from .evaluation import compare_conditions, mae, pearson, rmse
from .imputer import BootstrapEMImputer, bootstrap_em_impute, build_design_matrix, em_fit
from .kzfilter import KZFilter, KZFTBandpass, kz_smooth, kzft_bandpass, transfer_gain
from .missingness import MarSpec, apply_mar_mask, describe_missingness
from .series import TimeSeries, Weekday, parse_series, weekday_of, write_series
from .smoothing import LoessSmoother, MovingAverageSmoother, loess, moving_average
from .spectral import periodogram, top_peaks
from .vbpbb import ComponentSpec, PeriodicComponentExtractor, analyze_component

__all__ = [
    "BootstrapEMImputer",
    "ComponentSpec",
    "KZFTBandpass",
    "KZFilter",
    "LoessSmoother",
    "MarSpec",
    "MovingAverageSmoother",
    "PeriodicComponentExtractor",
    "TimeSeries",
    "Weekday",
    "analyze_component",
    "apply_mar_mask",
    "bootstrap_em_impute",
    "build_design_matrix",
    "compare_conditions",
    "describe_missingness",
    "em_fit",
    "kz_smooth",
    "kzft_bandpass",
    "loess",
    "mae",
    "moving_average",
    "parse_series",
    "pearson",
    "periodogram",
    "rmse",
    "top_peaks",
    "transfer_gain",
    "weekday_of",
    "write_series",
]
