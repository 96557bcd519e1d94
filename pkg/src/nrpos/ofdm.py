"""Resource-grid construction and OFDM (de)modulation.

The grid is indexed logically with DC at the centre: logical subcarrier
``j`` maps to FFT bin ``(j - fft_size//2) % fft_size``, so the lower half
of the logical axis lands in the negative-frequency bins.  All transforms
run in double precision; quantization to Q1.15 happens only at the sample
boundary (``modulate`` / ``IqBufferQ15``), never inside the FFT.

The inverse transform carries the ``1/K`` normalization (the forward one
is unnormalized).  Any Q15-valued grid therefore produces time samples no
larger than its largest RE, which rules out overflow during modulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fixedpoint import Q15_MAX, Q15_MIN, Q15_ONE, Amplitude, IqBufferQ15
from .refsig import ReferenceSignal

__all__ = [
    "NumerologyConfig",
    "ResourceGrid",
    "GridError",
    "default_numerology",
    "logical_to_bin",
    "occupied_band",
    "quantize_re",
    "grid_map",
    "modulate",
    "modulate_complex",
    "demodulate",
    "serialize_txdataF",
    "deserialize_txdataF",
]


class GridError(ValueError):
    """Inconsistent grid geometry, mapping conflict, or serialization overflow."""


@dataclass(frozen=True)
class NumerologyConfig:
    """OFDM numerology: transform size, spacing, rates, and CP length.

    ``sampling_rate_hz`` must equal ``fft_size * scs_hz`` and
    ``occupied_subcarriers`` cannot exceed the transform size.
    ``center_freq_hz`` is carried as metadata only; nothing in the
    baseband path depends on it.
    """

    fft_size: int
    scs_hz: float
    sampling_rate_hz: float
    cp_len: int
    occupied_subcarriers: int
    center_freq_hz: float = 0.0

    def __post_init__(self) -> None:
        if self.fft_size <= 0:
            raise GridError("fft_size must be positive")
        if not np.isclose(self.sampling_rate_hz, self.fft_size * self.scs_hz):
            raise GridError(
                f"sampling_rate_hz {self.sampling_rate_hz} != "
                f"fft_size*scs_hz {self.fft_size * self.scs_hz}"
            )
        if not 0 < self.occupied_subcarriers <= self.fft_size:
            raise GridError("occupied_subcarriers must be in (0, fft_size]")
        if not 0 <= self.cp_len < self.fft_size:
            raise GridError("cp_len must be in [0, fft_size)")

    @property
    def symbol_len(self) -> int:
        """Samples per OFDM symbol including the cyclic prefix."""
        return self.fft_size + self.cp_len


def default_numerology() -> NumerologyConfig:
    """1536-point grid at 30 kHz spacing: 46.08 MS/s, CP 132, 1272 occupied."""
    return NumerologyConfig(
        fft_size=1536,
        scs_hz=30e3,
        sampling_rate_hz=46.08e6,
        cp_len=132,
        occupied_subcarriers=1272,
        center_freq_hz=3.69e9,
    )


def logical_to_bin(logical: int | np.ndarray, fft_size: int):
    """Map DC-centered logical subcarrier index to FFT bin order."""
    return (logical - fft_size // 2) % fft_size


def occupied_band(cfg: NumerologyConfig) -> range:
    """Logical index range of the occupied band, centred on DC."""
    lo = (cfg.fft_size - cfg.occupied_subcarriers) // 2
    return range(lo, lo + cfg.occupied_subcarriers)


@dataclass(frozen=True)
class ResourceGrid:
    """Frequency-domain grid of ``num_symbols`` x ``fft_size`` Q15 cells.

    Cells are stored as complex128 but hold integer component values;
    unoccupied REs are exactly zero.  Grids are treated as immutable:
    :func:`grid_map` returns a new grid rather than writing in place.
    """

    cells: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.complex128)
        if cells.ndim != 2:
            raise GridError("cells must be a 2-D (num_symbols, fft_size) array")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, num_symbols: int, fft_size: int) -> "ResourceGrid":
        if num_symbols <= 0:
            raise GridError("num_symbols must be positive")
        return cls(cells=np.zeros((num_symbols, fft_size), dtype=np.complex128))

    @property
    def num_symbols(self) -> int:
        return self.cells.shape[0]

    @property
    def fft_size(self) -> int:
        return self.cells.shape[1]


def _quantize_component(x: np.ndarray) -> np.ndarray:
    """floor(x * 2**15), saturated so that +1.0 maps to Q15_MAX."""
    q = np.floor(np.asarray(x, dtype=np.float64) * Q15_ONE)
    if np.any(q < Q15_MIN) or np.any(q > Q15_ONE):
        raise GridError("signal component outside Q15 domain [-1, 1]")
    return np.clip(q, Q15_MIN, Q15_MAX).astype(np.int64)


def quantize_re(value: complex, amp: Amplitude | int) -> complex:
    """Quantize one RE value to Q15 and rescale: the grid-mapping arithmetic.

    Each component is floored at 2**15 scale (saturating at full scale for
    +1.0) and then rescaled as floor(q * amp / 2**15), so a unit symbol at
    amplitude ``a`` lands at floor(a * 32767 / 32768).
    """
    a = amp.a if isinstance(amp, Amplitude) else int(amp)
    if not 0 < a <= Q15_ONE:
        raise GridError(f"amplitude {a} outside (0, {Q15_ONE}]")
    qi = int((_quantize_component(value.real) * a) >> 15)
    qq = int((_quantize_component(value.imag) * a) >> 15)
    return complex(qi, qq)


def grid_map(grid: ResourceGrid, sig: ReferenceSignal, amp: Amplitude | int) -> ResourceGrid:
    """Quantize ``sig`` to Q15, rescale by ``amp``, and write it onto a copy of ``grid``.

    Writing onto an RE that already holds a nonzero value raises
    :class:`GridError`; everything else in the grid is left untouched.
    """
    a = amp.a if isinstance(amp, Amplitude) else int(amp)
    if not 0 < a <= Q15_ONE:
        raise GridError(f"amplitude {a} outside (0, {Q15_ONE}]")
    if len(sig) == 0:
        return grid

    sym = np.asarray(sig.sym_indices, dtype=np.int64)
    res = np.asarray(sig.re_indices, dtype=np.int64)
    if sym.max() >= grid.num_symbols or sym.min() < 0:
        raise GridError("signal symbol index outside grid")
    if res.max() >= grid.fft_size or res.min() < 0:
        raise GridError("signal RE index outside grid")

    qi = (_quantize_component(sig.symbols.real) * a) >> 15
    qq = (_quantize_component(sig.symbols.imag) * a) >> 15

    cells = np.array(grid.cells)
    if np.any(cells[sym, res] != 0):
        raise GridError("mapping conflict: target RE already occupied")
    cells[sym, res] = qi + 1j * qq
    return ResourceGrid(cells=cells)


def _time_symbols(grid: ResourceGrid, cfg: NumerologyConfig) -> np.ndarray:
    """Per-symbol IFFT (1/K normalized) with cyclic prefix, as complex128."""
    if grid.fft_size != cfg.fft_size:
        raise GridError(
            f"grid width {grid.fft_size} != numerology fft_size {cfg.fft_size}"
        )
    bins = np.fft.ifftshift(grid.cells, axes=1)
    body = np.fft.ifft(bins, axis=1)  # numpy backward norm = 1/K
    if cfg.cp_len:
        return np.concatenate([body[:, -cfg.cp_len :], body], axis=1)
    return body


def modulate_complex(grid: ResourceGrid, cfg: NumerologyConfig) -> np.ndarray:
    """Modulate to a double-precision sample stream (no Q15 quantization).

    This is the reference path: channel simulation and the round-trip
    identity operate on these samples.  Use :func:`modulate` when the
    int16 wire format is required.
    """
    return _time_symbols(grid, cfg).reshape(-1)


def modulate(grid: ResourceGrid, cfg: NumerologyConfig) -> IqBufferQ15:
    """Modulate and quantize to interleaved Q15 samples (round to nearest)."""
    return IqBufferQ15.from_complex(modulate_complex(grid, cfg))


def demodulate(
    samples: IqBufferQ15 | np.ndarray, cfg: NumerologyConfig, num_symbols: int
) -> ResourceGrid:
    """Strip CP, forward-DFT each symbol, and round cells to integers.

    ``samples`` may be an :class:`IqBufferQ15` or a raw complex array from
    :func:`modulate_complex` / the channel simulator.  Only the first
    ``num_symbols * (fft_size + cp_len)`` samples are consumed.
    """
    if num_symbols <= 0:
        raise GridError("num_symbols must be positive")
    if isinstance(samples, IqBufferQ15):
        z = samples.to_complex()
    else:
        z = np.asarray(samples, dtype=np.complex128)
    need = num_symbols * cfg.symbol_len
    if z.size < need:
        raise GridError(f"need {need} samples, got {z.size}")
    z = z[:need].reshape(num_symbols, cfg.symbol_len)[:, cfg.cp_len :]
    bins = np.fft.fft(z, axis=1)  # forward unnormalized
    cells = np.fft.fftshift(bins, axes=1)
    return ResourceGrid(cells=np.round(cells.real) + 1j * np.round(cells.imag))


def serialize_txdataF(grid: ResourceGrid) -> bytes:
    """Serialize the grid as symbol-major interleaved little-endian int16.

    Subcarriers are written in logical (DC-centered) order:
    ``I0 Q0 I1 Q1 ...`` for each symbol in turn, 4*fft_size bytes per
    symbol.  Cells must hold integer component values within int16 range.
    """
    re = grid.cells.real
    im = grid.cells.imag
    if np.any(re != np.round(re)) or np.any(im != np.round(im)):
        raise GridError("grid cells must be integer-valued for serialization")
    if re.min() < Q15_MIN or re.max() > Q15_MAX or im.min() < Q15_MIN or im.max() > Q15_MAX:
        raise GridError("grid cell outside int16 range")
    out = np.empty((grid.num_symbols, grid.fft_size, 2), dtype="<i2")
    out[:, :, 0] = re
    out[:, :, 1] = im
    return out.tobytes()


def deserialize_txdataF(data: bytes, fft_size: int) -> ResourceGrid:
    """Inverse of :func:`serialize_txdataF`."""
    flat = np.frombuffer(data, dtype="<i2")
    if flat.size % (2 * fft_size):
        raise GridError("byte length is not a whole number of symbols")
    pairs = flat.reshape(-1, fft_size, 2).astype(np.float64)
    return ResourceGrid(cells=pairs[:, :, 0] + 1j * pairs[:, :, 1])
