"""Command-line front end: generate, simulate, estimate, metrics, dataset, trace.

All outputs are deterministic given config + seed; every CSV starts with a
``# seed=N`` header line followed by a fixed, documented column row.  Config
and scenario files are flat ``key=value`` text (``#`` comments allowed);
unknown keys are errors so typos fail loudly.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 unexpected
internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .chanest import (
    combine_coherent,
    detect_toa,
    impulse_response,
    rtt_to_range,
)
from .dataset import (
    MAX_TX_GAIN_DB,
    DatasetError,
    DatasetWarning,
    folder_name,
    read_record,
    record_from_simulation,
    scan_dataset,
    write_record,
)
from .fixedpoint import Q15RangeError
from .metrics import (
    USRP_B210,
    MetricsError,
    estimate_snr,
    power_per_re,
    rx_power_dbm,
)
from .ofdm import (
    GridError,
    ResourceGrid,
    default_numerology,
    grid_map,
    serialize_txdataF,
)
from .refsig import (
    PrachConfig,
    PrsConfig,
    RefsigConfigError,
    SrsConfig,
    default_srs_config,
    generate_prach,
    generate_prs,
    generate_srs,
)
from .simchan import RttScenario, SimchanError
from .tracefmt import (
    TraceFormatError,
    TraceRecorder,
    extract,
    parse_message_defs,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

# Golden-ratio multiplier: spreads per-grid-point seeds across the 64-bit
# space so neighboring sweep points never share generator streams.
SEED_MIX = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1

# Attenuation-to-SNR anchor for simulated sweeps: zero attenuation maps to
# the default maximum per-RE SNR, and every attenuation dB costs one SNR dB.
DEFAULT_MAX_SNR_DB = 25.0

_DATA_ERRORS = (
    DatasetError,
    TraceFormatError,
    GridError,
    RefsigConfigError,
    SimchanError,
    MetricsError,
    Q15RangeError,
    FileNotFoundError,
    ValueError,
)


class UsageError(Exception):
    """Bad flags or subcommand; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def point_seed(base_seed: int, index: int) -> int:
    """Deterministic per-grid-point seed derived from the base seed."""
    return (base_seed ^ ((index * SEED_MIX) & _MASK64)) & _MASK64


def _parse_kv_text(text: str, source: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _load_kv_file(path: Optional[str]) -> Dict[str, str]:
    if path is None:
        return {}
    return _parse_kv_text(Path(path).read_text(), path)


def _take(values: Dict[str, str], key: str, convert, default):
    if key not in values:
        return default
    raw = values.pop(key)
    try:
        return convert(raw)
    except ValueError as exc:
        raise ValueError(f"config field {key!r}: {exc}") from None


def _reject_unknown(values: Dict[str, str], source: str) -> None:
    if values:
        names = ", ".join(sorted(values))
        raise ValueError(f"{source}: unknown config keys: {names}")


def _float_list(raw: str) -> List[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _header_seed(args: argparse.Namespace) -> int:
    """Seed echoed in output headers; 0 when nothing random was configured."""
    return 0 if args.seed is None else args.seed


def _open_csv(path: str, seed: int, columns: Sequence[str]):
    fh = open(path, "w", newline="")
    fh.write(f"# seed={seed}\n")
    writer = csv.writer(fh)
    writer.writerow(columns)
    return fh, writer


# ----------------------------------------------------------------- generate


def _build_reference(kind: str, cfg_values: Dict[str, str], source: str):
    if kind == "srs":
        defaults = default_srs_config()
        cfg = SrsConfig(
            comb_size=_take(cfg_values, "comb_size", int, defaults.comb_size),
            num_subcarriers=_take(
                cfg_values, "num_subcarriers", int, defaults.num_subcarriers
            ),
            start_re=_take(cfg_values, "start_re", int, defaults.start_re),
            zc_root=_take(cfg_values, "zc_root", int, defaults.zc_root),
            cyclic_shift=_take(cfg_values, "cyclic_shift", int, defaults.cyclic_shift),
        )
        _reject_unknown(cfg_values, source)
        return generate_srs(cfg), 1
    if kind == "prs":
        cfg = PrsConfig(
            num_prb=_take(cfg_values, "num_prb", int, 24),
            num_symbols=_take(cfg_values, "num_symbols", int, 2),
            gold_seed=_take(cfg_values, "gold_seed", int, 0),
            comb_size=_take(cfg_values, "comb_size", int, 2),
            re_offset=_take(cfg_values, "re_offset", int, 0),
            start_re=_take(cfg_values, "start_re", int, 0),
        )
        _reject_unknown(cfg_values, source)
        return generate_prs(cfg), cfg.num_symbols
    if kind == "prach":
        start_re = _take(cfg_values, "start_re", int, 0)
        cfg = PrachConfig(
            format=_take(cfg_values, "format", str, "0"),
            zc_root=_take(cfg_values, "zc_root", int, 1),
            cyclic_shift=_take(cfg_values, "cyclic_shift", int, 0),
        )
        _reject_unknown(cfg_values, source)
        return generate_prach(cfg, start_re=start_re), 1
    raise UsageError(f"unknown signal kind {kind!r} (expected srs, prs, or prach)")


def cmd_generate(args: argparse.Namespace) -> int:
    numerology = default_numerology()
    cfg_values = _load_kv_file(args.config)
    signal, num_symbols = _build_reference(args.kind, cfg_values, args.config or "<defaults>")
    grid = grid_map(
        ResourceGrid.empty(num_symbols, numerology.fft_size), signal, args.amplitude
    )
    iq_path = args.output_iq or f"{args.kind}.bin"
    map_path = args.output_map or f"{args.kind}_map.csv"
    Path(iq_path).write_bytes(serialize_txdataF(grid))
    fh, writer = _open_csv(map_path, _header_seed(args), ("symbol", "logical_re", "i", "q"))
    with fh:
        for sym, re_idx in zip(signal.sym_indices, signal.re_indices):
            cell = grid.cells[sym, re_idx]
            writer.writerow((sym, re_idx, int(cell.real), int(cell.imag)))
    print(
        f"kind={args.kind} mapped_res={signal.re_indices.size} "
        f"symbols={num_symbols} iq={iq_path} map={map_path}"
    )
    return EXIT_OK


# ----------------------------------------------------------------- simulate


@dataclass(frozen=True)
class SweepPlan:
    """Simulation grid: distances crossed with attenuations."""

    distances_m: Tuple[float, ...]
    attenuations_db: Tuple[float, ...]
    num_snapshots: int
    seed: int
    amplitude: int
    bias_samples: float
    max_snr_db: float

    def points(self) -> List[Tuple[int, float, float]]:
        grid = []
        index = 0
        for d in self.distances_m:
            for att in self.attenuations_db:
                grid.append((index, d, att))
                index += 1
        return grid


def _load_sweep_plan(path: str, seed_override: Optional[int]) -> SweepPlan:
    values = _parse_kv_text(Path(path).read_text(), path)
    plan = SweepPlan(
        distances_m=tuple(_take(values, "distances_m", _float_list, [10.0])),
        attenuations_db=tuple(_take(values, "attenuations_db", _float_list, [0.0])),
        num_snapshots=_take(values, "num_snapshots", int, 1),
        seed=_take(values, "seed", int, 0),
        amplitude=_take(values, "amplitude", int, 519),
        bias_samples=_take(values, "bias_samples", float, 0.0),
        max_snr_db=_take(values, "max_snr_db", float, DEFAULT_MAX_SNR_DB),
    )
    _reject_unknown(values, path)
    if seed_override is not None:
        plan = SweepPlan(
            distances_m=plan.distances_m,
            attenuations_db=plan.attenuations_db,
            num_snapshots=plan.num_snapshots,
            seed=seed_override,
            amplitude=plan.amplitude,
            bias_samples=plan.bias_samples,
            max_snr_db=plan.max_snr_db,
        )
    return plan


def _simulate_point(plan: SweepPlan, index: int, distance: float, attenuation: float):
    scenario = RttScenario(
        distance_m=distance,
        numerology=default_numerology(),
        srs=default_srs_config(),
        snr_db=plan.max_snr_db - attenuation,
        num_snapshots=plan.num_snapshots,
        seed=point_seed(plan.seed, index),
        amplitude=plan.amplitude,
        bias_samples=plan.bias_samples,
    )
    return record_from_simulation(
        scenario,
        tx_gain_db=MAX_TX_GAIN_DB - attenuation,
        extra_meta={"sweep_index": str(index), "attenuation_db": repr(attenuation)},
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    plan = _load_sweep_plan(args.scenario, args.seed)
    out_root = Path(args.output)
    points = plan.points()
    jobs = max(1, args.jobs)
    if jobs == 1:
        records = [_simulate_point(plan, *p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_simulate_point, plan, *p) for p in points]
            records = [f.result() for f in futures]  # merge in submission order
    for record in records:
        folder = write_record(record, out_root)
        print(f"wrote {folder}")
    print(f"seed={plan.seed} folders={len(records)} root={out_root}")
    return EXIT_OK


# ----------------------------------------------------------------- estimate

ESTIMATE_COLUMNS = (
    "file",
    "peak_index",
    "frac_offset",
    "toa_ns",
    "range_m",
    "peak_to_noise_db",
    "reliable",
)


def _estimate_record(record, numerology, srs) -> Tuple:
    fft_size = numerology.fft_size
    snapshots = record.num_snapshots(fft_size)
    if snapshots == 0:
        raise DatasetError("record holds no snapshots")
    chf = record.srs_chF.to_complex()
    if chf.size % snapshots:
        raise DatasetError(
            f"srs_chF length {chf.size} is not divisible into {snapshots} snapshots"
        )
    block = chf.size // snapshots
    if block != srs.re_indices.size:
        raise DatasetError(
            f"srs_chF block of {block} REs does not match the {srs.re_indices.size}-RE comb"
        )
    estimates = [chf[i * block : (i + 1) * block] for i in range(snapshots)]
    combined = combine_coherent(estimates)
    impulse = impulse_response(combined, fft_size, re_indices=srs.re_indices)
    noise = None
    if len(record.noise):
        # Impulse-domain per-sample noise power: W comb REs each contributing
        # their per-RE power, reduced by coherent combining over M snapshots.
        noise = block * power_per_re(record.noise).p_linear / snapshots
    result = detect_toa(impulse, numerology, noise=noise)
    rtt_samples = result.peak_index + result.frac_offset
    rtt_seconds = rtt_samples / numerology.sampling_rate_hz
    return (
        result.peak_index,
        result.frac_offset,
        rtt_seconds * 1e9,
        rtt_to_range(rtt_seconds),
        result.peak_to_noise_db,
        result.reliable,
    )


def cmd_estimate(args: argparse.Namespace) -> int:
    numerology = default_numerology()
    srs = generate_srs(default_srs_config())
    root = Path(args.root)
    records = scan_dataset(root, numerology)
    fh, writer = _open_csv(args.output, _header_seed(args), ESTIMATE_COLUMNS)
    failures = 0
    rows = 0
    with fh:
        for record in records:
            name = folder_name(record.distance_m, record.tx_gain_db)
            try:
                row = _estimate_record(record, numerology, srs)
            except _DATA_ERRORS as exc:
                warnings.warn(f"skipping {name}: {exc}", DatasetWarning)
                failures += 1
                continue
            writer.writerow(
                (
                    name,
                    row[0],
                    f"{row[1]:.6f}",
                    f"{row[2]:.3f}",
                    f"{row[3]:.3f}",
                    f"{row[4]:.3f}",
                    row[5],
                )
            )
            rows += 1
    if not records:
        warnings.warn(f"no dataset records under {root}", DatasetWarning)
    print(f"seed={_header_seed(args)} records={rows} skipped={failures} output={args.output}")
    if records and rows == 0:
        return EXIT_DATA
    return EXIT_OK


# ----------------------------------------------------------------- metrics

METRICS_COLUMNS = ("file", "re_count", "p_linear", "p_dbm", "snr_db")


def cmd_metrics(args: argparse.Namespace) -> int:
    root = Path(args.root)
    records = scan_dataset(root)
    fh, writer = _open_csv(args.output, _header_seed(args), METRICS_COLUMNS)
    rows = 0
    failures = 0
    with fh:
        for record in records:
            name = folder_name(record.distance_m, record.tx_gain_db)
            try:
                p_signal = power_per_re(record.srs_chF)
                p_dbm = rx_power_dbm(p_signal, USRP_B210)
                if len(record.noise):
                    snr = estimate_snr(p_signal, power_per_re(record.noise))
                    snr_db = f"{snr.db:.3f}"
                else:
                    snr_db = ""
            except _DATA_ERRORS as exc:
                warnings.warn(f"skipping {name}: {exc}", DatasetWarning)
                failures += 1
                continue
            writer.writerow(
                (
                    name,
                    len(record.srs_chF),
                    f"{p_signal.p_linear:.6f}",
                    f"{p_dbm:.3f}",
                    snr_db,
                )
            )
            rows += 1
    if not records:
        warnings.warn(f"no dataset records under {root}", DatasetWarning)
    print(f"seed={_header_seed(args)} records={rows} skipped={failures} output={args.output}")
    if records and rows == 0:
        return EXIT_DATA
    return EXIT_OK


# ----------------------------------------------------------------- dataset

SCAN_COLUMNS = (
    "folder",
    "distance_m",
    "tx_gain_db",
    "attenuation_db",
    "snapshots",
    "samples_chF",
    "samples_interp",
    "samples_chT",
    "samples_noise",
)


def cmd_dataset_scan(args: argparse.Namespace) -> int:
    numerology = default_numerology()
    records = scan_dataset(Path(args.root), numerology)
    fh, writer = _open_csv(args.output, _header_seed(args), SCAN_COLUMNS)
    with fh:
        for record in records:
            writer.writerow(
                (
                    folder_name(record.distance_m, record.tx_gain_db),
                    record.distance_m,
                    record.tx_gain_db,
                    record.attenuation_db,
                    record.num_snapshots(numerology.fft_size),
                    len(record.srs_chF),
                    len(record.srs_chF_lin_interp),
                    len(record.srs_chT),
                    len(record.noise),
                )
            )
    print(f"seed={_header_seed(args)} records={len(records)} output={args.output}")
    return EXIT_OK


# ----------------------------------------------------------------- trace


def _decode_event_fields(defs, message_id: str, fields: Dict) -> Dict:
    by_name = {d.id: d for d in defs}
    d = by_name.get(message_id)
    if d is None:
        raise TraceFormatError(f"unknown message id {message_id!r}")
    decoded = {}
    for name, kind in d.fields:
        if name not in fields:
            raise TraceFormatError(f"{message_id}: missing field {name!r}")
        value = fields[name]
        decoded[name] = bytes.fromhex(value) if kind == "buffer" else int(value)
    return decoded


def cmd_trace_record(args: argparse.Namespace) -> int:
    result = parse_message_defs(Path(args.defs).read_text())
    if result.errors:
        lineno, message = result.errors[0]
        raise TraceFormatError(f"{args.defs}:{lineno}: {message}")
    bad_lines = 0
    with open(args.output, "wb") as out_fh:
        with TraceRecorder(out_fh, result.defs, maxsize=args.queue_size) as recorder:
            with open(args.events) as events_fh:
                for raw in events_fh:
                    raw = raw.strip()
                    if not raw:
                        continue
                    try:
                        obj = json.loads(raw)
                        fields = _decode_event_fields(
                            result.defs, obj["id"], obj.get("fields", {})
                        )
                        recorder.emit(obj["id"], fields, timestamp=obj.get("timestamp"))
                    except (TraceFormatError, KeyError, ValueError):
                        bad_lines += 1
        print(
            f"written={recorder.written} rejected={recorder.rejected + bad_lines} "
            f"dropped={recorder.dropped} output={args.output}"
        )
    return EXIT_OK


def cmd_trace_extract(args: argparse.Namespace) -> int:
    result = parse_message_defs(Path(args.defs).read_text())
    if result.errors:
        lineno, message = result.errors[0]
        raise TraceFormatError(f"{args.defs}:{lineno}: {message}")
    payload = extract(
        Path(args.trace).read_bytes(), args.id, args.field, result.defs
    )
    Path(args.output).write_bytes(payload)
    print(f"bytes={len(payload)} output={args.output}")
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> _Parser:
    parser = _Parser(prog="nrpos", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a reference-signal IQ file and RE map")
    p.add_argument("kind", help="srs, prs, or prach")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--amplitude", type=int, default=519)
    p.add_argument("--output-iq")
    p.add_argument("--output-map")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run an RTT sweep into dataset folders")
    p.add_argument("--scenario", required=True, help="key=value sweep plan")
    p.add_argument("--output", required=True, help="dataset root directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="ToA/range CSV from a dataset tree")
    p.add_argument("--root", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("metrics", help="power/SNR CSV from a dataset tree")
    p.add_argument("--root", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dataset", help="dataset utilities")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    d = dsub.add_parser("make", help="synonym for simulate")
    d.add_argument("--scenario", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--jobs", type=int, default=1)
    d.set_defaults(func=cmd_simulate)
    d = dsub.add_parser("scan", help="inventory CSV of a dataset tree")
    d.add_argument("--root", required=True)
    d.add_argument("--output", required=True)
    d.set_defaults(func=cmd_dataset_scan)

    p = sub.add_parser("trace", help="binary trace recording and extraction")
    tsub = p.add_subparsers(dest="trace_command", required=True)
    t = tsub.add_parser("record", help="record JSONL events into a trace file")
    t.add_argument("--defs", required=True)
    t.add_argument("--events", required=True, help="JSONL event stream")
    t.add_argument("--output", required=True)
    t.add_argument("--queue-size", type=int, default=1024)
    t.set_defaults(func=cmd_trace_record)
    t = tsub.add_parser("extract", help="concatenate one field across events")
    t.add_argument("--trace", required=True)
    t.add_argument("--defs", required=True)
    t.add_argument("--id", required=True)
    t.add_argument("--field", required=True)
    t.add_argument("--output", required=True)
    t.set_defaults(func=cmd_trace_extract)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # pragma: no cover - defensive catch-all
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
