"""Channel estimation and time-of-arrival extraction.

The chain is: least-squares per-pilot estimates on the comb REs, linear
interpolation across the sounding band, an (unnormalized) inverse DFT to
the impulse response, and peak detection with sub-sample refinement.  A
comb of spacing ``c`` aliases the impulse response with period ``K/c``;
the default search window therefore covers only the cyclic-prefix span,
and interpolation is what makes the full band usable.

All estimates are plain complex arrays in Q15 fraction units (the grid
cell divided by 2**15), so a digital amplitude ``a`` shows up as a flat
channel gain ``a / 32768``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .fixedpoint import Q15_ONE, IqBufferQ15
from .metrics import PowerReport
from .ofdm import (
    NumerologyConfig,
    ResourceGrid,
    grid_map,
    logical_to_bin,
    modulate_complex,
)
from .refsig import PrachConfig, ReferenceSignal, generate_prach

__all__ = [
    "SPEED_OF_LIGHT",
    "ChanestError",
    "ChannelEstimate",
    "ToaResult",
    "PrachDetection",
    "ls_estimate",
    "interpolate_linear",
    "impulse_response",
    "detect_toa",
    "detect_prach",
    "combine_coherent",
    "estimate_channel",
    "rtt_to_range",
]

SPEED_OF_LIGHT = 299_792_458.0


class ChanestError(ValueError):
    """Invalid input to a channel-estimation or detection step."""


@dataclass(frozen=True)
class ToaResult:
    """Detected arrival: integer peak, sub-sample offset, and reliability.

    ``toa_seconds`` is ``(peak_index + frac_offset) / sampling_rate_hz``;
    ``reliable`` holds iff the peak clears the detection threshold over
    the estimated noise floor.
    """

    peak_index: int
    frac_offset: float
    toa_seconds: float
    peak_to_noise_db: float
    reliable: bool


@dataclass(frozen=True)
class PrachDetection:
    """Best preamble candidate and its coarse timing, with a detection flag."""

    preamble_id: Optional[int]
    timing_samples: int
    peak_db: float
    detected: bool


@dataclass(frozen=True)
class ChannelEstimate:
    """Bundled output of the estimation chain for one snapshot.

    ``noise_ref`` is the per-sample power of the same chain applied to a
    signal-free OFDM symbol, i.e. directly comparable against
    ``|impulse|**2``.
    """

    freq_comb: np.ndarray
    freq_interp: np.ndarray
    impulse: np.ndarray
    noise_ref: Optional[PowerReport] = None


def ls_estimate(rx_grid: ResourceGrid, ref: ReferenceSignal) -> np.ndarray:
    """Least-squares channel estimate y * conj(x) on the reference REs.

    Multiplying by the conjugate equals dividing for unit-modulus
    references.  Cells are converted from Q15 integer units to fractions
    first, so an identity channel at full digital amplitude estimates to 1.
    """
    if len(ref) == 0:
        raise ChanestError("reference signal is empty")
    if np.any(np.abs(ref.symbols) < 1e-6):
        raise ChanestError("reference symbol with zero modulus")
    sym = ref.sym_indices
    res = ref.re_indices
    if sym.max() >= rx_grid.num_symbols or res.max() >= rx_grid.fft_size:
        raise ChanestError("reference RE outside received grid")
    y = rx_grid.cells[sym, res] / Q15_ONE
    return y * np.conj(ref.symbols)


def interpolate_linear(comb: np.ndarray, comb_size: int) -> np.ndarray:
    """Linearly interpolate comb estimates onto every subcarrier in between.

    Output length is ``comb_size * (len - 1) + 1``: the band is filled up
    to the last comb position (no extrapolation past it), and the comb
    values themselves are preserved exactly.
    """
    comb = np.asarray(comb, dtype=np.complex128)
    if comb.size < 2:
        raise ChanestError("need at least two comb points to interpolate")
    if comb_size < 1:
        raise ChanestError("comb_size must be >= 1")
    xp = comb_size * np.arange(comb.size)
    x = np.arange(comb_size * (comb.size - 1) + 1)
    return np.interp(x, xp, comb.real) + 1j * np.interp(x, xp, comb.imag)


def impulse_response(
    freq: np.ndarray,
    fft_size: int,
    re_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Unnormalized inverse DFT of a band placed at its RE positions.

    ``h[n] = sum_k H[k] exp(+2j*pi*b_k*n/K)`` so a flat band of ones peaks
    at index 0 with magnitude equal to the band width, and a linear phase
    ``exp(-2j*pi*b*D/K)`` moves the peak to ``D``.  ``re_indices`` are
    logical (DC-centered) positions; when omitted the band occupies bins
    ``0..len-1``, which changes only the phase of ``h``, never its
    magnitude profile.
    """
    freq = np.asarray(freq, dtype=np.complex128)
    if freq.size > fft_size:
        raise ChanestError("band wider than the transform")
    spectrum = np.zeros(fft_size, dtype=np.complex128)
    if re_indices is None:
        spectrum[: freq.size] = freq
    else:
        idx = np.asarray(re_indices, dtype=np.int64)
        if idx.size != freq.size:
            raise ChanestError("re_indices length must match the band")
        spectrum[logical_to_bin(idx, fft_size)] = freq
    return np.fft.ifft(spectrum) * fft_size


def _wrap_mask_range(mask: np.ndarray, lo: int, hi: int) -> None:
    """Clear mask[lo:hi] with circular wraparound."""
    n = mask.size
    for i in range(lo, hi):
        mask[i % n] = False


def _noise_floor(mag2: np.ndarray, window: Tuple[int, int], guard: int = 16) -> float:
    """Robust per-sample noise power from samples outside the signal regions.

    Excludes the search window and its half-transform alias (comb-2 images
    land there), each padded by ``guard`` samples; the median of the
    remaining ``|h|**2`` is scaled by 1/ln2 (median of an exponential).
    """
    n = mag2.size
    lo, hi = window
    mask = np.ones(n, dtype=bool)
    _wrap_mask_range(mask, lo - guard, hi + guard)
    _wrap_mask_range(mask, lo - guard + n // 2, hi + guard + n // 2)
    if int(mask.sum()) < 8:  # degenerate window covering nearly everything
        mask = np.ones(n, dtype=bool)
        _wrap_mask_range(mask, lo - guard, hi + guard)
    if int(mask.sum()) < 1:
        raise ChanestError("no samples left to estimate the noise floor from")
    return float(np.median(mag2[mask])) / math.log(2.0)


def _parabolic_offset(mag2: np.ndarray, peak: int) -> float:
    """Sub-sample offset from a 3-point parabola on the log-magnitude."""
    n = mag2.size
    left = mag2[(peak - 1) % n]
    right = mag2[(peak + 1) % n]
    center = mag2[peak]
    if left <= 0 or right <= 0 or center <= 0:
        return 0.0
    l, c, r = math.log(left), math.log(center), math.log(right)
    denom = l - 2.0 * c + r
    if denom >= 0:  # not a local maximum in log domain
        return 0.0
    delta = 0.5 * (l - r) / denom
    bound = 0.5 - 1e-9  # offset lives in the open interval (-0.5, 0.5)
    return float(min(bound, max(-bound, delta)))


def detect_toa(
    impulse: np.ndarray,
    cfg: NumerologyConfig,
    noise: Union[PowerReport, float, None] = None,
    window: Optional[Tuple[int, int]] = None,
    mode: str = "strongest",
    threshold_db: float = 10.0,
    first_rel_db: float = 15.0,
) -> ToaResult:
    """Locate the arrival peak in an impulse response.

    ``noise`` is the per-sample noise power in the impulse domain; pass
    None to estimate it from the response itself (median-based, excluding
    the search window and its alias).  Self-estimation assumes a flat
    noise profile, which holds for comb (non-interpolated) estimates;
    interpolation shapes the noise floor, so pass an explicit ``noise``
    there.  ``mode`` selects the strongest peak (line-of-sight
    assumption) or the earliest local maximum that clears both the noise
    threshold and ``first_rel_db`` below the strongest peak ("first", for
    multipath).  The search window defaults to the cyclic-prefix span
    ``[0, cp_len)``, which also keeps comb-2 aliases at K/2 out of reach.
    """
    h = np.asarray(impulse, dtype=np.complex128)
    if h.size == 0:
        raise ChanestError("impulse response is empty")
    mag2 = np.abs(h) ** 2
    if not np.any(mag2 > 0):
        raise ChanestError("impulse response is identically zero; no peak")
    if window is None:
        window = (0, max(cfg.cp_len, 1))
    lo, hi = window
    if not 0 <= lo < hi <= h.size:
        raise ChanestError(f"search window {window} outside [0, {h.size}]")
    if mode not in ("strongest", "first"):
        raise ChanestError(f"unknown peak mode {mode!r}")

    if noise is None:
        p_n = _noise_floor(mag2, (lo, hi))
    elif isinstance(noise, PowerReport):
        p_n = noise.p_linear
    else:
        p_n = float(noise)
    if p_n <= 0:
        raise ChanestError("noise power must be positive")

    win = mag2[lo:hi]
    peak = lo + int(np.argmax(win))
    if mode == "first":
        # earliest local maximum that is both above the noise threshold and
        # within first_rel_db of the strongest peak (rejects sidelobes)
        cutoff = max(
            p_n * 10 ** (threshold_db / 10),
            mag2[peak] * 10 ** (-first_rel_db / 10),
        )
        for n in range(lo, hi):
            if mag2[n] < cutoff:
                continue
            if mag2[n] >= mag2[(n - 1) % mag2.size] and mag2[n] >= mag2[(n + 1) % mag2.size]:
                peak = n
                break
    frac = _parabolic_offset(mag2, peak)
    ptn_db = 10.0 * math.log10(mag2[peak] / p_n) if mag2[peak] > 0 else -math.inf
    return ToaResult(
        peak_index=peak,
        frac_offset=frac,
        toa_seconds=(peak + frac) / cfg.sampling_rate_hz,
        peak_to_noise_db=ptn_db,
        reliable=bool(ptn_db >= threshold_db),
    )


def _prach_replica(
    cand: PrachConfig, numerology: NumerologyConfig, start_re: Optional[int]
) -> np.ndarray:
    if start_re is None:
        start_re = (numerology.fft_size - cand.sequence_length) // 2
    sig = generate_prach(cand, start_re=start_re)
    grid = grid_map(
        ResourceGrid.empty(1, numerology.fft_size), sig, Q15_ONE
    )
    return modulate_complex(grid, numerology)


def detect_prach(
    rx: Union[IqBufferQ15, np.ndarray],
    cfg: PrachConfig,
    numerology: NumerologyConfig,
    candidates: Optional[Sequence[PrachConfig]] = None,
    threshold_db: float = 13.0,
    start_re: Optional[int] = None,
) -> PrachDetection:
    """Correlate received samples against candidate preamble replicas.

    Each candidate (default: just ``cfg``) is modulated to a full
    CP-prefixed symbol and cross-correlated with ``rx`` via FFT; the best
    non-negative lag wins.  ``peak_db`` compares the winning correlation
    magnitude against the median of the off-peak lags, so a noise-only
    input stays well under the threshold.
    """
    z = rx.to_complex() if isinstance(rx, IqBufferQ15) else np.asarray(rx, np.complex128)
    if candidates is None:
        candidates = [cfg]
    if not candidates:
        raise ChanestError("need at least one preamble candidate")
    replicas = [_prach_replica(c, numerology, start_re) for c in candidates]
    if z.size < replicas[0].size:
        raise ChanestError("capture shorter than one preamble duration")

    n = 1 << (int(z.size + replicas[0].size - 1).bit_length())
    rx_f = np.fft.fft(z, n)
    best = (None, 0, -math.inf)
    for pid, rep in enumerate(replicas):
        corr = np.fft.ifft(rx_f * np.conj(np.fft.fft(rep, n)))
        lags = np.abs(corr[: z.size]) ** 2  # non-negative lags only
        peak = int(np.argmax(lags))
        floor = float(np.median(lags)) / math.log(2.0)
        if floor <= 0:
            floor = np.finfo(float).tiny
        score = 10.0 * math.log10(lags[peak] / floor) if lags[peak] > 0 else -math.inf
        if score > best[2]:
            best = (pid, peak, score)
    pid, timing, score = best
    detected = score >= threshold_db
    return PrachDetection(
        preamble_id=pid if detected else None,
        timing_samples=timing,
        peak_db=score,
        detected=bool(detected),
    )


def combine_coherent(estimates: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise complex mean of phase-coherent snapshot estimates."""
    if len(estimates) == 0:
        raise ChanestError("nothing to combine")
    first = np.asarray(estimates[0], dtype=np.complex128)
    out = first.copy()
    for est in estimates[1:]:
        arr = np.asarray(est, dtype=np.complex128)
        if arr.shape != first.shape:
            raise ChanestError("estimates must all have the same shape")
        out += arr
    return out / len(estimates)


def estimate_channel(
    rx_grid: ResourceGrid,
    ref: ReferenceSignal,
    cfg: NumerologyConfig,
    comb_size: int,
    noise_symbol: Optional[int] = None,
    impulse_from: str = "comb",
) -> ChannelEstimate:
    """Run the full chain: LS -> interpolation -> impulse response.

    ``noise_symbol`` names a signal-free OFDM symbol in ``rx_grid``; the
    identical chain runs on it to produce a per-sample noise reference in
    the impulse domain.  ``impulse_from`` selects whether the impulse
    response comes straight from the comb estimates (default: its noise
    floor is flat, so self-estimated detection thresholds are unbiased)
    or from the interpolated band (alias-free but with a shaped floor).
    """
    if impulse_from not in ("interp", "comb"):
        raise ChanestError(f"impulse_from must be 'interp' or 'comb', not {impulse_from!r}")
    comb = ls_estimate(rx_grid, ref)
    interp = interpolate_linear(comb, comb_size)
    start = int(ref.re_indices.min())

    def _impulse(band_comb: np.ndarray, band_interp: np.ndarray) -> np.ndarray:
        if impulse_from == "comb":
            return impulse_response(band_comb, cfg.fft_size, ref.re_indices)
        idx = start + np.arange(band_interp.size)
        return impulse_response(band_interp, cfg.fft_size, idx)

    impulse = _impulse(comb, interp)

    noise_ref = None
    if noise_symbol is not None:
        if not 0 <= noise_symbol < rx_grid.num_symbols:
            raise ChanestError("noise_symbol outside grid")
        shifted = ReferenceSignal(
            kind=ref.kind,
            symbols=ref.symbols,
            re_indices=ref.re_indices,
            sym_indices=np.full(len(ref), noise_symbol),
        )
        n_comb = ls_estimate(rx_grid, shifted)
        n_interp = interpolate_linear(n_comb, comb_size)
        vals = _impulse(n_comb, n_interp)
        noise_ref = PowerReport(
            p_linear=float(np.mean(np.abs(vals) ** 2)), n_res=vals.size
        )
    return ChannelEstimate(
        freq_comb=comb, freq_interp=interp, impulse=impulse, noise_ref=noise_ref
    )


def rtt_to_range(rtt_seconds: float) -> float:
    """Two-way ranging: distance = c * RTT / 2."""
    if rtt_seconds < 0:
        raise ChanestError("round-trip time cannot be negative")
    return SPEED_OF_LIGHT * rtt_seconds / 2.0
