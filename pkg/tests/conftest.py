import datetime as dt

import numpy as np
import pytest

from periodica.series import TimeSeries

STUDY_START = dt.date(2014, 1, 1)
STUDY_END = dt.date(2024, 12, 16)


@pytest.fixture
def study_dates():
    return STUDY_START, STUDY_END


def synthetic_daily(seed: int, n: int = 4003, noise: float = 3.0) -> np.ndarray:
    """Annual + weekly sinusoids plus Gaussian noise."""
    t = np.arange(n)
    rng = np.random.default_rng(seed)
    return 10 * np.sin(2 * np.pi * t / 365) + 2 * np.sin(2 * np.pi * t / 7) + rng.normal(0, noise, n)


@pytest.fixture
def synthetic_series():
    return TimeSeries(STUDY_START, synthetic_daily(0))
