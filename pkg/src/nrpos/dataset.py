"""Measurement-dataset layout: per-distance/per-gain folders of raw Q15 files.

A dataset is a directory tree whose leaf folders are named
``<D>m_ue_att_<x>`` — distance ``D`` in meters and transmit attenuation
``x`` in dB below the radio's 89.5 dB maximum gain (so ``ue_att_0`` means
89.5 dB TX gain and ``ue_att_50`` means 39.5 dB).  Each folder holds four
little-endian interleaved int16 I/Q files:

    srs_chF.raw             comb-spaced frequency channel estimates
    srs_chF_lin_interp.raw  linearly interpolated (dense) estimates
    srs_chT.raw             time-domain channel impulse response
    noise.raw               noise-only resource elements

Files may hold M snapshots as M consecutive equal-length blocks; the
snapshot count is inferred from ``srs_chT`` whose per-snapshot block is
one FFT length.  Simulator-written folders add an optional ``meta.txt``
sidecar (sorted ``key=value`` lines) that real captures don't have.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .chanest import estimate_channel
from .fixedpoint import Q15_MAX, Q15_MIN, Q15_ONE, IqBufferQ15
from .ofdm import NumerologyConfig, default_numerology
from .refsig import generate_srs
from .simchan import RttScenario, simulate_rtt_exchange

__all__ = [
    "MAX_TX_GAIN_DB",
    "RAW_FILE_NAMES",
    "META_FILE_NAME",
    "DatasetError",
    "DatasetWarning",
    "DatasetRecord",
    "folder_name",
    "parse_folder_name",
    "write_record",
    "read_record",
    "scan_dataset",
    "record_from_simulation",
]

MAX_TX_GAIN_DB = 89.5

RAW_FILE_NAMES = ("srs_chF.raw", "srs_chF_lin_interp.raw", "srs_chT.raw", "noise.raw")
META_FILE_NAME = "meta.txt"

_FOLDER_RE = re.compile(r"^(?P<dist>\d+(?:\.\d+)?)m_ue_att_(?P<att>\d+(?:\.\d+)?)$")
# Permissive fallback: a standalone `<number>m` token and a `ue_att_<number>`
# substring anywhere in the name.
_DIST_TOKEN_RE = re.compile(r"(?:^|[^\d.])(\d+(?:\.\d+)?)m(?:[^a-zA-Z]|$)")
_ATT_TOKEN_RE = re.compile(r"ue_att_(\d+(?:\.\d+)?)")


class DatasetError(ValueError):
    """Unparseable folder name, missing file, or malformed raw file."""


class DatasetWarning(UserWarning):
    """Non-fatal dataset oddity (skipped folder, empty noise capture)."""


@dataclass(frozen=True)
class DatasetRecord:
    """One folder's worth of captures at a fixed distance and TX gain."""

    distance_m: float
    tx_gain_db: float
    srs_chF: IqBufferQ15
    srs_chF_lin_interp: IqBufferQ15
    srs_chT: IqBufferQ15
    noise: IqBufferQ15
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.distance_m < 0:
            raise DatasetError(f"distance must be non-negative, got {self.distance_m}")
        if len(self.srs_chF_lin_interp) < len(self.srs_chF):
            raise DatasetError(
                "interpolated estimate shorter than the comb estimate "
                f"({len(self.srs_chF_lin_interp)} < {len(self.srs_chF)})"
            )

    @property
    def attenuation_db(self) -> float:
        return MAX_TX_GAIN_DB - self.tx_gain_db

    def num_snapshots(self, fft_size: int) -> int:
        """Snapshot count: srs_chT holds one FFT-length block per snapshot."""
        n = len(self.srs_chT)
        if n % fft_size:
            raise DatasetError(
                f"srs_chT length {n} is not a multiple of the FFT size {fft_size}"
            )
        return n // fft_size


def _format_number(x: float) -> str:
    if math.isclose(x, round(x)):
        return str(int(round(x)))
    return f"{x:g}"


def folder_name(distance_m: float, tx_gain_db: float) -> str:
    """Conventional folder name for a (distance, TX gain) grid point."""
    attenuation = MAX_TX_GAIN_DB - tx_gain_db
    if distance_m < 0:
        raise DatasetError(f"distance must be non-negative, got {distance_m}")
    if attenuation < 0:
        raise DatasetError(
            f"TX gain {tx_gain_db} dB exceeds the {MAX_TX_GAIN_DB} dB maximum"
        )
    return f"{_format_number(distance_m)}m_ue_att_{_format_number(attenuation)}"


def parse_folder_name(name: str) -> Tuple[float, float]:
    """Parse ``<D>m_ue_att_<x>`` into (distance_m, tx_gain_db).

    Attenuation ``x`` counts down from the 89.5 dB maximum TX gain.  Names
    that merely contain the two tokens (extra prefixes/suffixes) are
    accepted by a permissive fallback; anything else raises DatasetError.
    """
    m = _FOLDER_RE.match(name)
    if m:
        return float(m.group("dist")), MAX_TX_GAIN_DB - float(m.group("att"))
    dist_m = _DIST_TOKEN_RE.search(name)
    att_m = _ATT_TOKEN_RE.search(name)
    if dist_m and att_m:
        return float(dist_m.group(1)), MAX_TX_GAIN_DB - float(att_m.group(1))
    raise DatasetError(f"folder name {name!r} does not match '<D>m_ue_att_<x>'")


def write_record(
    record: DatasetRecord,
    root: Union[str, Path],
    numerology: Optional[NumerologyConfig] = None,
) -> Path:
    """Write the four raw files (and meta.txt if present) under ``root``.

    The folder is created as ``root/<D>m_ue_att_<x>`` from the record's
    distance and TX gain; the function returns that folder path.
    """
    cfg = numerology or default_numerology()
    record.num_snapshots(cfg.fft_size)  # validates srs_chT block structure
    folder = Path(root) / folder_name(record.distance_m, record.tx_gain_db)
    folder.mkdir(parents=True, exist_ok=True)
    buffers = (record.srs_chF, record.srs_chF_lin_interp, record.srs_chT, record.noise)
    for name, buf in zip(RAW_FILE_NAMES, buffers):
        (folder / name).write_bytes(buf.to_bytes())
    if record.meta:
        lines = [f"{k}={record.meta[k]}" for k in sorted(record.meta)]
        (folder / META_FILE_NAME).write_text("\n".join(lines) + "\n")
    return folder


def _read_raw(folder: Path, name: str) -> IqBufferQ15:
    path = folder / name
    if not path.is_file():
        raise DatasetError(f"missing file {name} in {folder}")
    raw = path.read_bytes()
    if len(raw) % 4:
        raise DatasetError(
            f"{path} is truncated: {len(raw)} bytes is not a whole number of I/Q pairs"
        )
    return IqBufferQ15.from_bytes(raw)


def _read_meta(folder: Path) -> Dict[str, str]:
    path = folder / META_FILE_NAME
    meta: Dict[str, str] = {}
    if not path.is_file():
        return meta
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def read_record(
    folder: Union[str, Path],
    numerology: Optional[NumerologyConfig] = None,
) -> DatasetRecord:
    """Read one dataset folder back into a DatasetRecord (bit-exact)."""
    folder = Path(folder)
    cfg = numerology or default_numerology()
    distance_m, tx_gain_db = parse_folder_name(folder.name)
    chF, chF_interp, chT, noise = (_read_raw(folder, n) for n in RAW_FILE_NAMES)
    if len(noise) == 0:
        warnings.warn(f"{folder}: noise.raw is empty", DatasetWarning)
    record = DatasetRecord(
        distance_m=distance_m,
        tx_gain_db=tx_gain_db,
        srs_chF=chF,
        srs_chF_lin_interp=chF_interp,
        srs_chT=chT,
        noise=noise,
        meta=_read_meta(folder),
    )
    record.num_snapshots(cfg.fft_size)  # validates block structure
    return record


def scan_dataset(
    root: Union[str, Path],
    numerology: Optional[NumerologyConfig] = None,
) -> List[DatasetRecord]:
    """Load every record folder under ``root`` (recursively).

    Unparseable folder names and unreadable records are skipped with a
    DatasetWarning, never fatally.  Records come back sorted by distance,
    then attenuation, for a stable inventory order.
    """
    root = Path(root)
    records: List[DatasetRecord] = []
    for folder in sorted(p for p in root.rglob("*") if p.is_dir()):
        try:
            parse_folder_name(folder.name)
        except DatasetError:
            if any((folder / n).is_file() for n in RAW_FILE_NAMES):
                warnings.warn(
                    f"skipping {folder}: unrecognized folder name", DatasetWarning
                )
            continue
        try:
            records.append(read_record(folder, numerology))
        except DatasetError as exc:
            warnings.warn(f"skipping {folder}: {exc}", DatasetWarning)
    records.sort(key=lambda r: (r.distance_m, r.attenuation_db))
    return records


def _clip_to_q15(values: np.ndarray) -> IqBufferQ15:
    """Round to int16 with saturation (deep noise tails may graze the rails)."""
    z = np.asarray(values, dtype=np.complex128).ravel()
    re = np.clip(np.round(z.real), Q15_MIN, Q15_MAX).astype(np.int16)
    im = np.clip(np.round(z.imag), Q15_MIN, Q15_MAX).astype(np.int16)
    data = np.empty(2 * z.size, dtype=np.int16)
    data[0::2] = re
    data[1::2] = im
    return IqBufferQ15(data)


def record_from_simulation(
    scenario: RttScenario,
    tx_gain_db: Optional[float] = None,
    extra_meta: Optional[Mapping[str, str]] = None,
) -> DatasetRecord:
    """Run an RTT exchange and package the estimates in dataset layout.

    Per snapshot: the comb estimate scaled back to Q15 integer units goes
    to srs_chF, its dense interpolation to srs_chF_lin_interp, the
    FFT-normalized impulse response of the interpolated estimate to
    srs_chT, and the noise-only symbol's cells at the pilot positions to
    noise.raw.  Snapshots are concatenated in order.  Power ratios are
    preserved, so SNR estimated from the files matches the scenario.
    """
    cfg = scenario.numerology
    srs = generate_srs(scenario.srs)
    chF_parts: List[np.ndarray] = []
    interp_parts: List[np.ndarray] = []
    chT_parts: List[np.ndarray] = []
    noise_parts: List[np.ndarray] = []
    for grid, _gt in simulate_rtt_exchange(scenario):
        est = estimate_channel(grid, srs, cfg, comb_size=2, impulse_from="interp")
        chF_parts.append(est.freq_comb * Q15_ONE)
        interp_parts.append(est.freq_interp * Q15_ONE)
        chT_parts.append(est.impulse * (Q15_ONE / cfg.fft_size))
        noise_parts.append(grid.cells[1, srs.re_indices])
    meta: Dict[str, str] = {
        "distance_m": repr(scenario.distance_m),
        "snr_db": repr(scenario.snr_db),
        "seed": str(scenario.seed),
        "num_snapshots": str(scenario.num_snapshots),
        "amplitude": str(scenario.amplitude),
        "bias_samples": repr(scenario.bias_samples),
        "rtt_samples": repr(scenario.rtt_samples),
        "fft_size": str(cfg.fft_size),
        "sampling_rate_hz": repr(cfg.sampling_rate_hz),
    }
    if extra_meta:
        meta.update(extra_meta)
    return DatasetRecord(
        distance_m=scenario.distance_m,
        tx_gain_db=MAX_TX_GAIN_DB if tx_gain_db is None else tx_gain_db,
        srs_chF=_clip_to_q15(np.concatenate(chF_parts)),
        srs_chF_lin_interp=_clip_to_q15(np.concatenate(interp_parts)),
        srs_chT=_clip_to_q15(np.concatenate(chT_parts)),
        noise=_clip_to_q15(np.concatenate(noise_parts)),
        meta=meta,
    )
