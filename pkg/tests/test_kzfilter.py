import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from periodica.exceptions import ConfigError
from periodica.kzfilter import KzftParams, KzParams, kz_smooth, kzft_bandpass, transfer_gain


def kz_kernel(m, k):
    kern = np.ones(1)
    for _ in range(k):
        kern = np.convolve(kern, np.ones(m) / m)
    return kern


def brute_kz(x, m, k):
    """Interior values by explicit sum against the k-fold kernel."""
    kern = kz_kernel(m, k)
    half = kern.size // 2
    return np.array([np.dot(kern, x[t - half : t + half + 1]) for t in range(half, x.size - half)])


def mp_gain(m, k, f):
    mpmath.mp.dps = 50
    f = mpmath.mpf(f)
    return float(abs(mpmath.sin(mpmath.pi * m * f) / (m * mpmath.sin(mpmath.pi * f))) ** k)


class TestParams:
    def test_even_window_rejected(self):
        with pytest.raises(ConfigError):
            KzParams(4, 1)

    def test_nyquist(self):
        with pytest.raises(ConfigError):
            KzftParams(5, 1, 0.6)


class TestKzSmooth:
    @pytest.mark.parametrize("m,k", [(1, 1), (3, 2), (21, 3), (101, 1)])
    def test_constant(self, m, k):
        y = kz_smooth(np.full(150, 3.5), KzParams(m, k))
        np.testing.assert_allclose(y, 3.5, rtol=0, atol=1e-12)

    def test_window_one_identity(self):
        x = np.random.default_rng(0).normal(size=50)
        assert np.array_equal(kz_smooth(x, KzParams(1, 4)), x)

    @pytest.mark.parametrize("m,k", [(5, 1), (7, 3), (21, 2)])
    def test_linear_interior(self, m, k):
        t = np.arange(200, dtype=float)
        x = 0.7 * t - 3.0
        y = kz_smooth(x, KzParams(m, k))
        e = k * (m - 1) // 2
        np.testing.assert_allclose(y[e:-e], x[e:-e], rtol=0, atol=1e-10)

    @pytest.mark.parametrize("m,k", [(3, 1), (5, 2), (7, 3), (11, 4)])
    def test_brute_force_convolution(self, m, k):
        x = np.random.default_rng(m * 10 + k).normal(size=180)
        e = k * (m - 1) // 2
        np.testing.assert_allclose(kz_smooth(x, KzParams(m, k))[e:-e], brute_kz(x, m, k), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(float, 60, elements=st.floats(-100, 100)),
        arrays(float, 60, elements=st.floats(-100, 100)),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    def test_linearity(self, x, y, a, b):
        p = KzParams(5, 2)
        lhs = kz_smooth(a * x + b * y, p)
        rhs = a * kz_smooth(x, p) + b * kz_smooth(y, p)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_missing_skip_and_rescale(self):
        x = np.array([1.0, np.nan, 3.0, 5.0, np.nan])
        y = kz_smooth(x, KzParams(3, 1))
        np.testing.assert_allclose(y, [1.0, 2.0, 4.0, 4.0, 5.0])

    def test_isolated_position_stays_missing(self):
        x = np.array([1.0, np.nan, np.nan, np.nan, 2.0])
        y = kz_smooth(x, KzParams(3, 1))
        assert np.isnan(y[2]) and not np.isnan(y[1])

    def test_complex_input(self):
        x = np.exp(1j * np.arange(30) * 0.1)
        y = kz_smooth(x, KzParams(5, 1))
        assert np.iscomplexobj(y)
        np.testing.assert_allclose(y.real, kz_smooth(x.real, KzParams(5, 1)), atol=1e-12)


class TestTransferGain:
    def test_dc(self):
        assert transfer_gain(731, 3, 0.0) == 1.0

    def test_zero_at_one_over_m(self):
        assert transfer_gain(3, 1, 1 / 3) < 1e-15

    def test_adjacent_yearly_harmonic_rejected(self):
        g = transfer_gain(731, 1, 2 / 365)
        assert 1.3e-3 < g < 1.5e-3
        assert g == pytest.approx(mp_gain(731, 1, 2 / 365), rel=1e-12)

    @pytest.mark.parametrize("m,k,f", [(21, 3, 0.05), (101, 2, 0.0123), (731, 1, 0.3)])
    def test_matches_high_precision(self, m, k, f):
        assert transfer_gain(m, k, f) == pytest.approx(mp_gain(m, k, f), rel=1e-10)

    def test_vectorised(self):
        g = transfer_gain(5, 1, np.array([0.0, 0.2, 0.1]))
        assert g.shape == (3,) and g[0] == 1.0 and g[1] < 1e-15


class TestKzftBandpass:
    def test_on_band_annual(self):
        t = np.arange(2500)
        x = 3.0 * np.cos(2 * np.pi * t / 365 + 0.4)
        y = kzft_bandpass(x, KzftParams(731, 1, 1 / 365))
        e = 365
        bound = 2 * transfer_gain(731, 1, 2 / 365)
        assert np.max(np.abs(y[e:-e] - x[e:-e])) / 3.0 < max(bound, 0.01)

    def test_dc_is_off_band(self):
        c = 7.0
        y = kzft_bandpass(np.full(2000, c), KzftParams(731, 1, 1 / 365))
        g = transfer_gain(731, 1, 1 / 365)
        # shrinking edge windows are biased by design; the bound holds at interior points
        assert np.max(np.abs(y[365:-365])) <= 2 * g * c + 1e-9

    def test_weekly_rejected_by_annual_filter(self):
        t = np.arange(3000)
        x = np.cos(2 * np.pi * t / 7)
        y = kzft_bandpass(x, KzftParams(731, 2, 1 / 365))
        e = 731
        assert np.max(np.abs(y[e:-e])) < 1e-3
        assert transfer_gain(731, 2, 1 / 365 - 1 / 7) < 1e-3

    def test_nu_zero_is_plain_smoothing(self):
        x = np.random.default_rng(1).normal(size=100)
        np.testing.assert_allclose(kzft_bandpass(x, KzftParams(5, 2, 0.0)), kz_smooth(x, KzParams(5, 2)))

    def test_real_reconstruction(self):
        # the two demodulated sidebands must be conjugates for a real input
        x = np.random.default_rng(2).normal(size=400)
        nu, p = 1 / 30, KzParams(101, 1)
        t = np.arange(x.size)
        pos = kz_smooth(x * np.exp(-2j * np.pi * nu * t), p) * np.exp(2j * np.pi * nu * t)
        neg = kz_smooth(x * np.exp(2j * np.pi * nu * t), p) * np.exp(-2j * np.pi * nu * t)
        recon = pos + neg
        assert np.max(np.abs(recon.imag)) < 1e-12
        np.testing.assert_allclose(recon.real, kzft_bandpass(x, KzftParams(101, 1, nu)), atol=1e-12)

    def test_reproduces_cosine_at_interior_within_image_gain(self):
        for m, k, nu in [(731, 1, 1 / 365), (101, 2, 1 / 30), (21, 3, 1 / 7)]:
            t = np.arange(3000)
            x = np.cos(2 * np.pi * nu * t)
            y = kzft_bandpass(x, KzftParams(m, k, nu))
            e = k * (m - 1) // 2
            assert np.max(np.abs(y[e:-e] - x[e:-e])) <= 2 * transfer_gain(m, k, 2 * nu) + 1e-9

    def test_gap_tolerance(self):
        t = np.arange(1500)
        x = np.cos(2 * np.pi * t / 7).astype(float)
        x[::10] = np.nan
        y = kzft_bandpass(x, KzftParams(21, 3, 1 / 7))
        assert not np.isnan(y).any()
        e = 30
        assert np.max(np.abs(y[e:-e] - np.cos(2 * np.pi * t / 7)[e:-e])) < 0.1
