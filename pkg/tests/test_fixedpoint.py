import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrpos.fixedpoint import (
    A_MAX,
    Q15_MAX,
    Q15_MIN,
    Q15_ONE,
    Amplitude,
    IqBufferQ15,
    Q15RangeError,
    amplitude_to_dbfs,
    dbfs_to_amplitude,
    effective_bits,
    float_to_q15,
    q15_to_float,
    rescale,
)


class TestFloatToQ15:
    def test_half(self):
        assert float_to_q15(0.5) == 16384

    def test_lower_bound(self):
        assert float_to_q15(-1.0) == -32768

    def test_floor_semantics(self):
        # floor(0.1 * 32768) = floor(3276.8) = 3276
        assert float_to_q15(0.1) == 3276

    def test_near_full_scale(self):
        assert float_to_q15(1.0 - 2.0**-15) == 32767
        assert float_to_q15(math.nextafter(1.0, 0.0)) == 32767

    @pytest.mark.parametrize("bad", [1.0, -1.0000001, 2.0, -3.5])
    def test_out_of_range(self, bad):
        with pytest.raises(Q15RangeError):
            float_to_q15(bad)

    def test_array_input(self):
        out = float_to_q15(np.array([0.5, -1.0, 0.1]))
        assert out.dtype == np.int16
        assert out.tolist() == [16384, -32768, 3276]

    def test_array_out_of_range(self):
        with pytest.raises(Q15RangeError):
            float_to_q15(np.array([0.0, 1.0]))


class TestQ15ToFloat:
    def test_exact_values(self):
        assert q15_to_float(16384) == 0.5
        assert q15_to_float(-32768) == -1.0
        assert q15_to_float(3276) == 0.0999755859375

    def test_out_of_range(self):
        with pytest.raises(Q15RangeError):
            q15_to_float(32768)


def test_round_trip_exhaustive():
    # Every representable value survives the float trip exactly.
    v = np.arange(Q15_MIN, Q15_MAX + 1, dtype=np.int64)
    back = np.floor((v / Q15_ONE) * Q15_ONE).astype(np.int64)
    assert np.array_equal(back, v)


@given(st.floats(min_value=-1.0, max_value=1.0, exclude_max=True, allow_nan=False))
def test_quantization_error_strictly_below_one_lsb(x):
    # Exact rational arithmetic: float64 subtraction can round the error up to
    # exactly 2**-15 for subnormal inputs, hiding that the true bound is strict.
    v = float_to_q15(x)
    err = abs(Fraction(x) - Fraction(v, Q15_ONE))
    assert err < Fraction(1, Q15_ONE)


@given(st.integers(Q15_MIN, Q15_MAX))
def test_round_trip_property(v):
    assert float_to_q15(q15_to_float(v)) == v


class TestRescale:
    def test_worked_values(self):
        assert rescale(32767, Amplitude(519)) == 518
        assert rescale(0, Amplitude(8231)) == 0
        assert rescale(-32768, Amplitude(32768)) == -32768

    def test_accepts_bare_int_amplitude(self):
        assert rescale(32767, 519) == 518

    def test_floor_toward_minus_infinity(self):
        # -519 * 32767 / 32768 = -518.98..., floor is -519
        assert rescale(-32767, 519) == -519

    def test_array(self):
        out = rescale(np.array([32767, 0, -32768], dtype=np.int16), Amplitude(519))
        assert out.dtype == np.int16
        assert out.tolist() == [518, 0, -519]

    def test_amplitude_bounds(self):
        with pytest.raises(Q15RangeError):
            rescale(1, 0)
        with pytest.raises(Q15RangeError):
            rescale(1, 32769)

    @given(
        st.integers(Q15_MIN, Q15_MAX),
        st.integers(Q15_MIN, Q15_MAX),
        st.integers(1, A_MAX),
    )
    def test_monotone_in_x(self, x1, x2, a):
        if x1 > x2:
            x1, x2 = x2, x1
        assert rescale(x1, a) <= rescale(x2, a)

    @given(st.integers(Q15_MIN, Q15_MAX), st.integers(1, A_MAX))
    def test_result_bounded_by_amplitude(self, x, a):
        assert abs(rescale(x, a)) <= a


class TestDbfs:
    def test_device_amplitudes(self):
        assert amplitude_to_dbfs(519) == pytest.approx(-36.0, abs=0.1)
        assert amplitude_to_dbfs(8231) == pytest.approx(-12.0, abs=0.1)
        assert amplitude_to_dbfs(32768) == 0.0

    def test_inverse_on_device_points(self):
        assert dbfs_to_amplitude(-36.0) == 519
        assert dbfs_to_amplitude(-12.0) == 8231
        assert dbfs_to_amplitude(0.0) == 32768

    def test_positive_dbfs_rejected(self):
        with pytest.raises(Q15RangeError):
            dbfs_to_amplitude(0.1)

    def test_nonpositive_amplitude_rejected(self):
        with pytest.raises(Q15RangeError):
            amplitude_to_dbfs(0)

    def test_inversion_fixed_point_exhaustive(self):
        for a in range(1, A_MAX + 1):
            assert dbfs_to_amplitude(amplitude_to_dbfs(a)) == a

    @given(st.floats(min_value=-40.0, max_value=0.0))
    def test_forward_after_inverse_tight(self, dbfs):
        # Integer amplitudes quantize dB space; above -40 dBFS (a >= 328) the
        # half-step granularity 20*log10((a+0.5)/a) stays below 0.02 dB.
        a = dbfs_to_amplitude(dbfs)
        assert amplitude_to_dbfs(a) == pytest.approx(dbfs, abs=0.02)

    @given(st.floats(min_value=-80.0, max_value=-40.0))
    def test_forward_after_inverse_within_granularity(self, dbfs):
        a = dbfs_to_amplitude(dbfs)
        half_step = 20 * math.log10(a / (a - 0.5))
        assert amplitude_to_dbfs(a) == pytest.approx(dbfs, abs=half_step + 1e-9)


def test_effective_bits_match_device_table():
    assert effective_bits(519) == 9
    assert effective_bits(8231) == 13
    assert effective_bits(32768) == 15
    assert effective_bits(1) == 0


class TestAmplitude:
    def test_dbfs_consistency(self):
        amp = Amplitude(519)
        assert amp.a_dbfs == pytest.approx(20 * math.log10(519 / 32768), abs=1e-12)

    def test_full_scale_is_zero_dbfs(self):
        assert Amplitude(32768).a_dbfs == 0.0

    def test_from_dbfs(self):
        assert Amplitude.from_dbfs(-36.0).a == 519

    @pytest.mark.parametrize("bad", [0, -5, 32769])
    def test_range_validation(self, bad):
        with pytest.raises(Q15RangeError):
            Amplitude(bad)


class TestIqBufferQ15:
    def test_layout_round_trip(self):
        buf = IqBufferQ15(np.array([1, -1, 32767, -32768], dtype=np.int16))
        raw = buf.to_bytes()
        assert raw == b"\x01\x00\xff\xff\xff\x7f\x00\x80"
        assert np.array_equal(IqBufferQ15.from_bytes(raw).data, buf.data)

    def test_from_complex_round(self):
        buf = IqBufferQ15.from_complex(np.array([1.4 - 2.6j]))
        assert buf.data.tolist() == [1, -3]

    def test_from_complex_floor(self):
        buf = IqBufferQ15.from_complex(np.array([1.9 - 2.1j]), rounding="floor")
        assert buf.data.tolist() == [1, -3]

    def test_overflow_raises(self):
        with pytest.raises(Q15RangeError):
            IqBufferQ15.from_complex(np.array([40000.0 + 0j]))

    def test_odd_bytes_rejected(self):
        with pytest.raises(Q15RangeError):
            IqBufferQ15.from_bytes(b"\x01\x00\xff")

    def test_num_samples(self):
        buf = IqBufferQ15(np.zeros(10, dtype=np.int16))
        assert len(buf) == 5 and buf.num_samples == 5

    @given(st.lists(st.integers(Q15_MIN, Q15_MAX), min_size=0, max_size=64))
    def test_bytes_round_trip_property(self, comps):
        if len(comps) % 2:
            comps.append(0)
        buf = IqBufferQ15(np.array(comps, dtype=np.int16))
        assert np.array_equal(IqBufferQ15.from_bytes(buf.to_bytes()).data, buf.data)

    def test_to_complex(self):
        buf = IqBufferQ15(np.array([3, 4, -1, 2], dtype=np.int16))
        assert np.array_equal(buf.to_complex(), np.array([3 + 4j, -1 + 2j]))
