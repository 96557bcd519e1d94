"""Signed Q1.15 fixed-point baseband samples and amplitude scaling.

Complex baseband values are held as 16-bit two's-complement integer pairs with
15 fractional bits, so each component spans [-1, 1) in real value.  Float to
fixed conversion uses floor (toward minus infinity), not round-to-nearest.
Amplitude rescaling ``floor(a * x / 2**15)`` runs in 64-bit intermediates and
never saturates silently: an out-of-range result raises.

Serialized layout for a sample buffer is interleaved I0 Q0 I1 Q1 ... with each
component a little-endian int16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Q15_BITS",
    "Q15_ONE",
    "Q15_MIN",
    "Q15_MAX",
    "A_MAX",
    "Q15RangeError",
    "SampleQ15",
    "Amplitude",
    "IqBufferQ15",
    "float_to_q15",
    "q15_to_float",
    "rescale",
    "amplitude_to_dbfs",
    "dbfs_to_amplitude",
    "effective_bits",
]

Q15_BITS = 15
Q15_ONE = 1 << Q15_BITS  # 32768, the scale factor 2**15
Q15_MIN = -(1 << Q15_BITS)
Q15_MAX = (1 << Q15_BITS) - 1
A_MAX = Q15_ONE  # full-scale amplitude, 0 dBFS


class Q15RangeError(ValueError):
    """Value not representable in signed Q1.15 (or amplitude out of range)."""


class SampleQ15(NamedTuple):
    """One complex sample: in-phase and quadrature Q1.15 components."""

    i: int
    q: int


def float_to_q15(x):
    """Convert a normalized float in [-1, 1) to a Q1.15 integer via floor.

    Accepts a scalar or an ndarray.  Values outside [-1, 1) raise
    Q15RangeError: the caller was supposed to normalize first.
    """
    if isinstance(x, np.ndarray):
        if x.size and (float(x.min()) < -1.0 or float(x.max()) >= 1.0):
            raise Q15RangeError("input not normalized to [-1, 1)")
        return np.floor(x * Q15_ONE).astype(np.int16)
    x = float(x)
    if not -1.0 <= x < 1.0:
        raise Q15RangeError(f"input {x!r} not in [-1, 1)")
    # x * 2**15 is exact in binary floating point, so floor is exact too.
    return math.floor(x * Q15_ONE)


def q15_to_float(v):
    """Convert a Q1.15 integer (scalar or ndarray) back to its real value v / 2**15."""
    if isinstance(v, np.ndarray):
        return v / float(Q15_ONE)
    v = int(v)
    if not Q15_MIN <= v <= Q15_MAX:
        raise Q15RangeError(f"{v} outside 16-bit signed range")
    return v / Q15_ONE


def rescale(x, amp):
    """Amplitude rescale: floor(a * x / 2**15) with >=32-bit intermediates.

    ``x`` is a Q1.15 integer (scalar or integer ndarray), ``amp`` an Amplitude
    or a bare linear amplitude in (0, 32768].  |result| <= a always holds, so
    the output fits Q1.15 again.
    """
    a = amp.a if isinstance(amp, Amplitude) else int(amp)
    if not 0 < a <= A_MAX:
        raise Q15RangeError(f"amplitude {a} not in (0, {A_MAX}]")
    if isinstance(x, np.ndarray):
        prod = x.astype(np.int64) * a
        return (prod >> Q15_BITS).astype(np.int16)  # arithmetic shift == floor
    x = int(x)
    if not Q15_MIN <= x <= Q15_MAX:
        raise Q15RangeError(f"{x} outside 16-bit signed range")
    return (a * x) >> Q15_BITS


def amplitude_to_dbfs(a) -> float:
    """Linear amplitude to dB relative to full scale: 20*log10(a / 32768)."""
    a = float(a)
    if a <= 0:
        raise Q15RangeError(f"amplitude must be positive, got {a}")
    return 20.0 * math.log10(a / A_MAX)


def dbfs_to_amplitude(dbfs: float) -> int:
    """Inverse of amplitude_to_dbfs: round-half-up of 32768 * 10**(dbfs/20).

    Positive dBFS would exceed full scale and raises.
    """
    dbfs = float(dbfs)
    if dbfs > 0:
        raise Q15RangeError(f"{dbfs} dBFS exceeds full scale")
    return int(math.floor(A_MAX * 10.0 ** (dbfs / 20.0) + 0.5))


def effective_bits(a: int) -> int:
    """Number of magnitude bits an amplitude occupies: floor(log2(a)).

    The highest set bit position; e.g. 519 -> 9, 8231 -> 13, 32768 -> 15.
    """
    a = int(a)
    if a <= 0:
        raise Q15RangeError(f"amplitude must be positive, got {a}")
    return a.bit_length() - 1


@dataclass(frozen=True)
class Amplitude:
    """Linear rescale amplitude in full-scale units, 0 < a <= 32768."""

    a: int

    def __post_init__(self) -> None:
        if not isinstance(self.a, (int, np.integer)) or isinstance(self.a, bool):
            raise Q15RangeError(f"amplitude must be an integer, got {self.a!r}")
        if not 0 < self.a <= A_MAX:
            raise Q15RangeError(f"amplitude {self.a} not in (0, {A_MAX}]")
        object.__setattr__(self, "a", int(self.a))

    @property
    def a_dbfs(self) -> float:
        return amplitude_to_dbfs(self.a)

    @classmethod
    def from_dbfs(cls, dbfs: float) -> "Amplitude":
        return cls(dbfs_to_amplitude(dbfs))


@dataclass(frozen=True)
class IqBufferQ15:
    """Contiguous interleaved int16 I/Q sample buffer.

    ``data`` has shape (2*num_samples,) laid out I0 Q0 I1 Q1 ...; the wire
    format is the same layout little-endian.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.dtype != np.int16:
            raise Q15RangeError(f"buffer dtype must be int16, got {arr.dtype}")
        if arr.ndim != 1 or arr.size % 2:
            raise Q15RangeError("buffer must be a flat array of I/Q pairs")
        object.__setattr__(self, "data", arr)

    def __len__(self) -> int:
        return self.data.size // 2

    @property
    def num_samples(self) -> int:
        return self.data.size // 2

    def to_complex(self) -> np.ndarray:
        """View the buffer as complex128 (I + jQ), in Q15 integer units."""
        return self.data[0::2].astype(np.float64) + 1j * self.data[1::2].astype(np.float64)

    @classmethod
    def from_complex(cls, z: np.ndarray, rounding: str = "round") -> "IqBufferQ15":
        """Quantize complex values (in Q15 integer units) to an int16 buffer.

        rounding: "round" (nearest) or "floor".  Components outside the int16
        range raise instead of saturating.
        """
        z = np.asarray(z, dtype=np.complex128).ravel()
        op = {"round": np.round, "floor": np.floor}.get(rounding)
        if op is None:
            raise ValueError(f"unknown rounding mode {rounding!r}")
        re = op(z.real)
        im = op(z.imag)
        lo, hi = float(Q15_MIN), float(Q15_MAX)
        for comp in (re, im):
            if comp.size and (comp.min() < lo or comp.max() > hi):
                raise Q15RangeError("sample overflows int16; rescale before quantizing")
        data = np.empty(2 * z.size, dtype=np.int16)
        data[0::2] = re.astype(np.int16)
        data[1::2] = im.astype(np.int16)
        return cls(data)

    def to_bytes(self) -> bytes:
        return self.data.astype("<i2", copy=False).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "IqBufferQ15":
        if len(raw) % 4:
            raise Q15RangeError(
                f"byte length {len(raw)} is not a whole number of I/Q int16 pairs"
            )
        return cls(np.frombuffer(raw, dtype="<i2").astype(np.int16))
