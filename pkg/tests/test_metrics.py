import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nrpos.fixedpoint import Amplitude
from nrpos.metrics import (
    USRP_B210,
    VVDN_RU,
    DeviceProfile,
    MetricsError,
    PowerReport,
    estimate_snr,
    noise_power,
    power_per_re,
    rx_power_dbm,
    tx_power_dbm,
)
from nrpos.ofdm import ResourceGrid


def profile(**kw):
    return DeviceProfile(name="test", amp=Amplitude(519), **kw)


class TestPowerPerRe:
    def test_constant_half_scale(self):
        vals = np.full(100, 16384 + 0j)
        assert power_per_re(vals).p_linear == 2**28

    def test_zero(self):
        assert power_per_re(np.zeros(10, dtype=complex)).p_linear == 0.0

    def test_single_pythagorean(self):
        rep = power_per_re(np.array([3 + 4j]))
        assert rep.p_linear == 25.0
        assert rep.energy == 25
        assert rep.n_res == 1

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            power_per_re(np.array([], dtype=complex))

    def test_no_overflow_at_full_scale(self):
        vals = np.full(4096, -32768 - 32768j)
        assert power_per_re(vals).p_linear == 2.0 * 2**30

    @given(st.integers(1, 10), st.integers(-180, 180), st.integers(-180, 180))
    def test_scale_equivariance(self, c, i, q):
        base = power_per_re(np.array([complex(i, q), complex(-q, i)]))
        scaled = power_per_re(np.array([complex(c * i, c * q), complex(-c * q, c * i)]))
        assert scaled.p_linear == c * c * base.p_linear


class TestDbm:
    def test_full_scale_is_30dbm(self):
        assert tx_power_dbm(PowerReport(2.0**30, 1), profile()) == pytest.approx(30.0)

    def test_quarter_scale(self):
        got = tx_power_dbm(PowerReport(2.0**28, 1), profile())
        assert got == pytest.approx(23.979, abs=1e-3)

    def test_additive_gains(self):
        got = tx_power_dbm(PowerReport(2.0**30, 1), profile(g_t=10.0, g_t_cal=-3.0))
        assert got == pytest.approx(37.0)

    def test_rx_gain_subtracted(self):
        got = rx_power_dbm(PowerReport(2.0**30, 1), profile(g_r=40.0))
        assert got == pytest.approx(-10.0, abs=1e-9)

    def test_rx_small_signal_with_cal(self):
        # 10log10(2**-6) = -18.062, so 30 - 18.062 + 2
        got = rx_power_dbm(PowerReport(2.0**24, 1), profile(g_r_cal=2.0))
        assert got == pytest.approx(13.938, abs=1e-3)

    def test_tx_rx_agree_with_zero_gains(self):
        p = PowerReport(12345.0, 7)
        assert tx_power_dbm(p, profile()) == rx_power_dbm(p, profile())

    def test_zero_power_raises(self):
        with pytest.raises(MetricsError):
            tx_power_dbm(PowerReport(0.0, 1), profile())

    def test_device_profiles_carry_expected_scaling(self):
        assert USRP_B210.amp.a == 519
        assert VVDN_RU.amp.a == 8231
        assert USRP_B210.amp.a_dbfs == pytest.approx(-36.0, abs=0.1)
        assert VVDN_RU.amp.a_dbfs == pytest.approx(-12.0, abs=0.1)


class TestNoisePower:
    def test_zero_grid(self):
        g = ResourceGrid.empty(2, 64)
        assert noise_power(g, [1, 3, 5]).p_linear == 0.0

    def test_single_re(self):
        cells = np.zeros((1, 16), dtype=complex)
        cells[0, 4] = 1 + 1j
        assert noise_power(ResourceGrid(cells=cells), [4]).p_linear == 2.0

    def test_gaussian_statistics(self):
        rng = np.random.default_rng(3)
        sigma = 40.0
        n = np.round(rng.normal(0, sigma, (1, 20000))) + 1j * np.round(
            rng.normal(0, sigma, (1, 20000))
        )
        rep = noise_power(ResourceGrid(cells=n), np.arange(20000))
        assert rep.p_linear == pytest.approx(2 * sigma**2, rel=0.05)

    def test_empty_set_rejected(self):
        with pytest.raises(MetricsError):
            noise_power(ResourceGrid.empty(1, 16), [])

    def test_out_of_range_rejected(self):
        with pytest.raises(MetricsError):
            noise_power(ResourceGrid.empty(1, 16), [16])

    def test_symbol_selector(self):
        cells = np.zeros((2, 8), dtype=complex)
        cells[1, 2] = 3 + 4j
        g = ResourceGrid(cells=cells)
        assert noise_power(g, [2], symbols=[0]).p_linear == 0.0
        assert noise_power(g, [2], symbols=[1]).p_linear == 25.0


class TestEstimateSnr:
    def test_unity(self):
        est = estimate_snr(PowerReport(2.0, 10), PowerReport(1.0, 10))
        assert est.linear == 1.0
        assert est.db == pytest.approx(0.0)
        assert not est.unreliable

    def test_signal_absent(self):
        est = estimate_snr(PowerReport(1.0, 10), PowerReport(1.0, 10))
        assert est.linear == 0.0
        assert est.unreliable
        assert est.db == pytest.approx(-60.0)

    def test_20db(self):
        est = estimate_snr(PowerReport(101.0, 10), PowerReport(1.0, 10))
        assert est.linear == pytest.approx(100.0)
        assert est.db == pytest.approx(20.0)

    def test_zero_noise_raises(self):
        with pytest.raises(MetricsError):
            estimate_snr(PowerReport(1.0, 1), PowerReport(0.0, 1))

    def test_negative_difference_flagged(self):
        est = estimate_snr(PowerReport(0.5, 10), PowerReport(1.0, 10))
        assert est.unreliable
        assert est.linear == 0.0


class TestSnrCalibration:
    """Statistical check of the estimator against synthetic AWGN at known SNR."""

    @pytest.mark.parametrize("snr_db", [0, 10, 20, 25])
    def test_mean_estimate_within_half_db(self, snr_db):
        rng = np.random.default_rng(1000 + snr_db)
        n_res = 624
        trials = 120
        sig_amp = 500.0  # per-RE complex amplitude
        p_sig = sig_amp**2
        sigma2 = p_sig / 10 ** (snr_db / 10)  # total noise power per RE
        got = []
        for _ in range(trials):
            phases = rng.uniform(0, 2 * np.pi, n_res)
            clean = sig_amp * np.exp(1j * phases)
            noise = rng.normal(0, np.sqrt(sigma2 / 2), (2, 2, n_res))
            rx = clean + noise[0, 0] + 1j * noise[0, 1]
            empty = noise[1, 0] + 1j * noise[1, 1]
            est = estimate_snr(
                power_per_re(np.round(rx.real) + 1j * np.round(rx.imag)),
                power_per_re(np.round(empty.real) + 1j * np.round(empty.imag)),
            )
            got.append(est.db)
        assert np.mean(got) == pytest.approx(snr_db, abs=0.5)
