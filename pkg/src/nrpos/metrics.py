"""Link-budget arithmetic: per-RE power, dBm conversion, and SNR estimation.

Power is measured in Q15-squared units (mean of ``i**2 + q**2`` over the
REs carrying the signal) and referenced to digital full scale for the dBm
conversions: full-scale power ``2**30`` corresponds to 0 dB before gains.
Transmit and receive chains differ only in the sign of the front-end gain
term; calibration offsets always add.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .fixedpoint import Amplitude, IqBufferQ15
from .ofdm import ResourceGrid

__all__ = [
    "FULL_SCALE_POWER",
    "SNR_LINEAR_FLOOR",
    "DeviceProfile",
    "PowerReport",
    "SnrEstimate",
    "MetricsError",
    "USRP_B210",
    "VVDN_RU",
    "power_per_re",
    "tx_power_dbm",
    "rx_power_dbm",
    "noise_power",
    "estimate_snr",
]

# |full scale|^2 = (2**15)**2; the dBm reference point of the digital domain.
FULL_SCALE_POWER = float(1 << 30)

# Linear floor applied inside the log when the signal estimate vanishes.
SNR_LINEAR_FLOOR = 1e-6


class MetricsError(ValueError):
    """Degenerate input to a power or SNR computation."""


@dataclass(frozen=True)
class DeviceProfile:
    """Per-device scaling and gain figures used by the dBm conversions.

    ``g_t``/``g_r`` are the configured front-end gains in dB; the ``_cal``
    offsets correct them to spectrum-analyzer truth and default to zero
    (uncalibrated).
    """

    name: str
    amp: Amplitude
    g_t: float = 0.0
    g_r: float = 0.0
    g_t_cal: float = 0.0
    g_r_cal: float = 0.0


# Radios the toolkit has been scaled against: a lab SDR driven at -36 dBFS
# and an O-RAN radio unit driven at -12 dBFS.
USRP_B210 = DeviceProfile(name="usrp-b210", amp=Amplitude(519))
VVDN_RU = DeviceProfile(name="vvdn-ru", amp=Amplitude(8231))


@dataclass(frozen=True)
class PowerReport:
    """Mean per-RE power: exact integer energy, the linear mean, and dBm.

    ``p_dbm`` is filled in by the dBm conversions when a device context is
    known; :func:`power_per_re` leaves it None.
    """

    p_linear: float
    n_res: int
    energy: int = 0
    p_dbm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_res < 1:
            raise MetricsError("power report needs at least one RE")
        if self.p_linear < 0:
            raise MetricsError("per-RE power cannot be negative")


@dataclass(frozen=True)
class SnrEstimate:
    """Estimated SNR; ``unreliable`` marks a non-positive signal estimate."""

    linear: float
    db: float
    unreliable: bool = False


def power_per_re(values: Union[np.ndarray, Sequence[complex], IqBufferQ15]) -> PowerReport:
    """Mean of ``i**2 + q**2`` over the given Q15 RE values.

    The sum is accumulated exactly in 64-bit integers (worst case
    ``K * 2 * 32768**2`` overflows 32 bits already at K = 1) and divided
    once at the end; the exact integer energy is kept on the report.
    """
    if isinstance(values, IqBufferQ15):
        z = values.to_complex()
    else:
        z = np.asarray(values, dtype=np.complex128).ravel()
    if z.size == 0:
        raise MetricsError("power over an empty RE set is undefined")
    i = z.real.astype(np.int64)
    q = z.imag.astype(np.int64)
    energy = int(np.sum(i * i + q * q, dtype=np.int64))
    return PowerReport(p_linear=energy / z.size, n_res=z.size, energy=energy)


def _dbm(p_linear: float, gain_db: float) -> float:
    if p_linear <= 0:
        raise MetricsError("dBm undefined for zero power; measure more REs")
    return 10.0 * math.log10(p_linear) - 10.0 * math.log10(FULL_SCALE_POWER) + 30.0 + gain_db


def tx_power_dbm(p: PowerReport, dev: DeviceProfile) -> float:
    """Transmit power: 10log10(P) - 10log10(2**30) + 30 + g_t + g_t_cal."""
    return _dbm(p.p_linear, dev.g_t + dev.g_t_cal)


def rx_power_dbm(p: PowerReport, dev: DeviceProfile) -> float:
    """Receive power referenced to the antenna port: gain is subtracted."""
    return _dbm(p.p_linear, -dev.g_r + dev.g_r_cal)


def noise_power(
    grid: ResourceGrid,
    empty_res: Union[np.ndarray, Sequence[int]],
    symbols: Optional[Sequence[int]] = None,
) -> PowerReport:
    """Per-RE power over designated signal-free REs of a grid.

    ``empty_res`` holds logical subcarrier indices; by default every OFDM
    symbol contributes its value at those positions (pass ``symbols`` to
    restrict).
    """
    idx = np.asarray(empty_res, dtype=np.int64)
    if idx.size == 0:
        raise MetricsError("need at least one empty RE for a noise estimate")
    if idx.min() < 0 or idx.max() >= grid.fft_size:
        raise MetricsError("empty RE index outside grid")
    rows = grid.cells if symbols is None else grid.cells[list(symbols), :]
    return power_per_re(rows[:, idx])


def estimate_snr(
    p_r: PowerReport, p_n: PowerReport, floor: float = SNR_LINEAR_FLOOR
) -> SnrEstimate:
    """SNR = (P_r - P_n) / P_n, with the dB value floored when degenerate.

    A non-positive difference (possible at very low SNR, where the noise
    estimate exceeds the measured signal power) reports linear 0, the dB of
    the floor, and ``unreliable=True`` rather than raising.
    """
    if p_n.p_linear <= 0:
        raise MetricsError("noise power is zero; cannot form an SNR")
    raw = (p_r.p_linear - p_n.p_linear) / p_n.p_linear
    if raw <= 0:
        return SnrEstimate(linear=0.0, db=10.0 * math.log10(floor), unreliable=True)
    return SnrEstimate(linear=raw, db=10.0 * math.log10(raw), unreliable=False)
