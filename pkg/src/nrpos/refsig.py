"""Positioning reference signals: SRS, PRS and PRACH preambles.

All three signals are produced as unit-modulus complex sequences in double
precision together with the resource-element positions they occupy; Q15
quantization happens later, at grid-mapping time, so it stays a single
testable step.

SRS and PRACH preambles are Zadoff-Chu sequences; PRS is a QPSK-mapped Gold
sequence.  Sequence lengths that are not valid Zadoff-Chu lengths (even, or
sharing a factor with the root) use the standard construction of a
largest-prime-length base sequence cyclically extended to the target length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GOLD_OUTPUT_OFFSET",
    "PRACH_SEQUENCE_LENGTHS",
    "SrsConfig",
    "PrsConfig",
    "PrachConfig",
    "ReferenceSignal",
    "RefsigConfigError",
    "generate_zadoff_chu",
    "zadoff_chu_extended",
    "generate_gold31",
    "qpsk_from_bits",
    "generate_srs",
    "generate_prs",
    "generate_prach",
    "default_srs_config",
]

# Gold generator discards this many initial outputs (the usual Nc constant).
GOLD_OUTPUT_OFFSET = 1600

# Long preamble formats use 839-element sequences, short formats 139.
PRACH_SEQUENCE_LENGTHS = {
    "F0": 839, "F1": 839, "F2": 839, "F3": 839,
    "A1": 139, "A2": 139, "A3": 139, "B1": 139, "B2": 139, "B3": 139,
}


class RefsigConfigError(ValueError):
    """Invalid reference-signal configuration."""


def generate_zadoff_chu(root: int, length: int, shift: int = 0) -> np.ndarray:
    """Zadoff-Chu sequence z[n] = exp(-1j*pi*root*n*(n+1)/length), cyclically shifted.

    Requires odd length and gcd(root, length) = 1 (otherwise the sequence is
    not constant-amplitude zero-autocorrelation).  The shift is applied as
    z_shifted[n] = z[(n + shift) mod length].
    """
    root, length, shift = int(root), int(length), int(shift)
    if length < 1 or length % 2 == 0:
        raise RefsigConfigError(f"sequence length must be odd and positive, got {length}")
    if math.gcd(root, length) != 1:
        raise RefsigConfigError(f"root {root} shares a factor with length {length}")
    if not 0 <= shift < length:
        raise RefsigConfigError(f"cyclic shift {shift} outside [0, {length})")
    m = (np.arange(length, dtype=np.int64) + shift) % length
    # Reduce the integer phase mod 2*length before touching floats: m*(m+1) is
    # always even, so exp(-1j*pi*k/length) has period 2*length in k.  This
    # keeps the sin/cos arguments small and exact for large roots.
    k = (root * m * (m + 1)) % (2 * length)
    return np.exp(-1j * np.pi * k / length)


def _largest_prime_at_most(n: int) -> int:
    for cand in range(n, 1, -1):
        if cand < 2:
            break
        if all(cand % p for p in range(2, int(math.isqrt(cand)) + 1)):
            return cand
    raise RefsigConfigError(f"no prime at or below {n}")


def zadoff_chu_extended(root: int, length: int, shift: int = 0) -> np.ndarray:
    """Zadoff-Chu sequence of arbitrary length via prime base + cyclic extension.

    The base sequence has the largest prime length n_zc <= length and is
    repeated cyclically to fill ``length`` elements; the cyclic shift is
    applied to the base (mod n_zc) before extension.  For prime ``length``
    this reduces to generate_zadoff_chu exactly.
    """
    length = int(length)
    if length < 2:
        raise RefsigConfigError(f"sequence length must be >= 2, got {length}")
    n_zc = _largest_prime_at_most(length)
    base = generate_zadoff_chu(root, n_zc, shift % n_zc)
    idx = np.arange(length) % n_zc
    return base[idx]


def generate_gold31(c_init: int, length: int) -> np.ndarray:
    """Gold bit sequence from two 31-bit LFSRs, output offset 1600.

    x1 recurrence: x1[n+31] = x1[n+3] xor x1[n], seeded (1, 0, ..., 0).
    x2 recurrence: x2[n+31] = x2[n+3] xor x2[n+2] xor x2[n+1] xor x2[n],
    seeded with the bits of c_init (LSB first).  Output bit n is
    x1[n+1600] xor x2[n+1600].
    """
    c_init, length = int(c_init), int(length)
    if length <= 0:
        raise RefsigConfigError(f"sequence length must be positive, got {length}")
    if not 0 <= c_init < (1 << 31):
        raise RefsigConfigError(f"c_init {c_init} is not a 31-bit value")
    total = length + GOLD_OUTPUT_OFFSET
    x1 = np.zeros(total + 31, dtype=np.uint8)
    x2 = np.zeros(total + 31, dtype=np.uint8)
    x1[0] = 1
    for bit in range(31):
        x2[bit] = (c_init >> bit) & 1
    for n in range(total):
        x1[n + 31] = x1[n + 3] ^ x1[n]
        x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n]
    out = x1[GOLD_OUTPUT_OFFSET : GOLD_OUTPUT_OFFSET + length] ^ x2[
        GOLD_OUTPUT_OFFSET : GOLD_OUTPUT_OFFSET + length
    ]
    return out.astype(np.uint8)


def qpsk_from_bits(bits: np.ndarray) -> np.ndarray:
    """Map bit pairs to QPSK: s = ((1-2*b[2k]) + 1j*(1-2*b[2k+1])) / sqrt(2)."""
    bits = np.asarray(bits)
    if bits.size % 2:
        raise RefsigConfigError("QPSK mapping needs an even number of bits")
    b = bits.astype(np.float64)
    return ((1.0 - 2.0 * b[0::2]) + 1j * (1.0 - 2.0 * b[1::2])) / math.sqrt(2.0)


@dataclass(frozen=True)
class ReferenceSignal:
    """A generated signal: unit-modulus symbols plus their grid positions.

    ``re_indices`` are logical (DC-centered) subcarrier indices, parallel to
    ``symbols``; ``sym_indices`` gives the OFDM symbol each element lives in
    (all zeros for single-symbol signals such as SRS and PRACH preambles).
    """

    kind: str
    symbols: np.ndarray
    re_indices: np.ndarray
    sym_indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        symbols = np.asarray(self.symbols, dtype=np.complex128)
        re_idx = np.asarray(self.re_indices, dtype=np.int64)
        sym_idx = (
            np.zeros(symbols.size, dtype=np.int64)
            if self.sym_indices is None
            else np.asarray(self.sym_indices, dtype=np.int64)
        )
        if not (symbols.size == re_idx.size == sym_idx.size):
            raise RefsigConfigError("symbols, re_indices and sym_indices must align")
        if symbols.size:
            mods = np.abs(symbols)
            if float(np.max(np.abs(mods - 1.0))) > 1e-9:
                raise RefsigConfigError("reference symbols must be unit modulus")
            # Within each OFDM symbol the subcarrier indices must strictly increase.
            order = np.lexsort((re_idx, sym_idx))
            if not np.array_equal(order, np.arange(re_idx.size)):
                raise RefsigConfigError("RE positions must be sorted by (symbol, subcarrier)")
            same_sym = sym_idx[1:] == sym_idx[:-1]
            if np.any(same_sym & (np.diff(re_idx) <= 0)):
                raise RefsigConfigError("subcarrier indices must strictly increase per symbol")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "re_indices", re_idx)
        object.__setattr__(self, "sym_indices", sym_idx)

    def __len__(self) -> int:
        return self.symbols.size


@dataclass(frozen=True)
class SrsConfig:
    """Sounding signal layout: comb pattern and Zadoff-Chu parameters."""

    comb_size: int = 2
    num_subcarriers: int = 624
    start_re: int = 144
    zc_root: int = 1
    cyclic_shift: int = 0

    def __post_init__(self) -> None:
        if self.comb_size not in (2, 4):
            raise RefsigConfigError(f"comb_size must be 2 or 4, got {self.comb_size}")
        if self.num_subcarriers < 2:
            raise RefsigConfigError("num_subcarriers must be >= 2")
        if self.start_re < 0:
            raise RefsigConfigError("start_re must be non-negative")
        if self.cyclic_shift < 0:
            raise RefsigConfigError("cyclic_shift must be non-negative")


def default_srs_config(
    fft_size: int = 1536,
    scs_hz: float = 30e3,
    bandwidth_hz: float = 37.44e6,
    comb_size: int = 2,
    zc_root: int = 1,
    cyclic_shift: int = 0,
) -> SrsConfig:
    """Comb layout centered on DC for a given sounding bandwidth.

    37.44 MHz at 30 kHz spacing spans 1248 subcarriers; comb 2 occupies every
    other one, i.e. 624 elements starting at logical index 144 on a 1536 grid.
    """
    span = int(round(bandwidth_hz / scs_hz))
    num = span // comb_size
    start = fft_size // 2 - span // 2
    if start < 0:
        raise RefsigConfigError("sounding bandwidth exceeds the FFT grid")
    return SrsConfig(
        comb_size=comb_size,
        num_subcarriers=num,
        start_re=start,
        zc_root=zc_root,
        cyclic_shift=cyclic_shift,
    )


def generate_srs(cfg: SrsConfig) -> ReferenceSignal:
    """Sounding signal: Zadoff-Chu sequence on a comb of subcarriers."""
    seq = zadoff_chu_extended(cfg.zc_root, cfg.num_subcarriers, cfg.cyclic_shift)
    indices = cfg.start_re + cfg.comb_size * np.arange(cfg.num_subcarriers)
    return ReferenceSignal(kind="SRS", symbols=seq, re_indices=indices)


@dataclass(frozen=True)
class PrsConfig:
    """Downlink positioning signal layout: Gold-seeded QPSK over a comb."""

    num_prb: int
    num_symbols: int
    gold_seed: int
    comb_size: int = 2
    re_offset: int = 0
    start_re: int = 0

    def __post_init__(self) -> None:
        if self.num_symbols not in (2, 4, 6, 12):
            raise RefsigConfigError(
                f"num_symbols must be one of 2/4/6/12, got {self.num_symbols}"
            )
        if self.num_prb < 1:
            raise RefsigConfigError("num_prb must be >= 1")
        if self.comb_size < 1 or (12 * self.num_prb) % self.comb_size:
            raise RefsigConfigError("comb_size must divide the PRB span")
        if not 0 <= self.re_offset < self.comb_size:
            raise RefsigConfigError("re_offset must lie within the comb")
        if not 0 <= self.gold_seed < (1 << 31):
            raise RefsigConfigError("gold_seed is not a 31-bit value")


def generate_prs(cfg: PrsConfig) -> ReferenceSignal:
    """QPSK symbols from one Gold sequence, comb-mapped across OFDM symbols.

    Symbol l uses comb offset (re_offset + l) mod comb_size so consecutive
    symbols stagger across the band.  Bits are consumed in mapping order from
    a single sequence seeded with gold_seed.
    """
    width = 12 * cfg.num_prb
    per_symbol = width // cfg.comb_size
    total = per_symbol * cfg.num_symbols
    bits = generate_gold31(cfg.gold_seed, 2 * total)
    symbols = qpsk_from_bits(bits)
    re_indices = np.empty(total, dtype=np.int64)
    sym_indices = np.empty(total, dtype=np.int64)
    for l in range(cfg.num_symbols):
        offset = (cfg.re_offset + l) % cfg.comb_size
        sl = slice(l * per_symbol, (l + 1) * per_symbol)
        re_indices[sl] = cfg.start_re + offset + cfg.comb_size * np.arange(per_symbol)
        sym_indices[sl] = l
    return ReferenceSignal(
        kind="PRS", symbols=symbols, re_indices=re_indices, sym_indices=sym_indices
    )


@dataclass(frozen=True)
class PrachConfig:
    """Random-access preamble parameters for one format."""

    format: str
    zc_root: int = 1
    cyclic_shift: int = 0

    def __post_init__(self) -> None:
        fmt = str(self.format).upper()
        if fmt in ("0", "1", "2", "3"):
            fmt = "F" + fmt
        if fmt not in PRACH_SEQUENCE_LENGTHS:
            raise RefsigConfigError(
                f"unknown preamble format {self.format!r}; "
                f"expected one of {sorted(PRACH_SEQUENCE_LENGTHS)}"
            )
        object.__setattr__(self, "format", fmt)

    @property
    def sequence_length(self) -> int:
        return PRACH_SEQUENCE_LENGTHS[self.format]


def generate_prach(cfg: PrachConfig, start_re: int = 0) -> ReferenceSignal:
    """Random-access preamble: one Zadoff-Chu sequence on contiguous REs."""
    seq = generate_zadoff_chu(cfg.zc_root, cfg.sequence_length, cfg.cyclic_shift)
    indices = start_re + np.arange(cfg.sequence_length)
    return ReferenceSignal(kind="PRACH", symbols=seq, re_indices=indices)
