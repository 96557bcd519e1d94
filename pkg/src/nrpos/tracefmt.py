"""Event tracing: definition-file parser, binary recorder, field extractor.

The definition grammar is line-oriented text:

    # comment
    ID = GNB_PHY_UL_FREQ_CHANNEL_ESTIMATE
        GROUP = phy
        FORMAT = int,frame : buffer,chest_f

An unindented ``ID =`` line opens a message; indented ``GROUP =`` /
``FORMAT =`` lines belong to it.  ``FORMAT`` holds colon-separated
``kind,name`` entries with kind ``int`` or ``buffer``.  Messages receive
numeric ids in file order.  Parsing is total: bad input produces
(line number, message) entries in ``ParseResult.errors``, never an
exception.

Binary traces start with the magic ``NRPT`` and a u16 format version,
then one record per event: u32 numeric id, u64 timestamp (monotonic
nanoseconds), and the fields in definition order — ints as signed i64,
buffers as u32 length + raw bytes.  Everything is little-endian.

The recorder decouples the producing pipeline from disk through a
bounded queue: ``emit`` never blocks, events beyond the queue capacity
are dropped and counted, and a consumer thread does all file writing.
"""

from __future__ import annotations

import io
import queue
import struct
import threading
import time
import warnings
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

__all__ = [
    "TRACE_MAGIC",
    "TRACE_VERSION",
    "FIELD_KINDS",
    "TraceFormatError",
    "TraceTruncatedWarning",
    "TraceMessageDef",
    "TraceEvent",
    "ParseResult",
    "RecordResult",
    "parse_message_defs",
    "encode_event",
    "write_trace",
    "read_trace",
    "extract",
    "TraceRecorder",
]

TRACE_MAGIC = b"NRPT"
TRACE_VERSION = 1
FIELD_KINDS = ("int", "buffer")

_I64_MIN = -(1 << 63)
_I64_MAX = (1 << 63) - 1


class TraceFormatError(ValueError):
    """Nonconforming event, unknown id/field, or corrupt trace header."""


class TraceTruncatedWarning(UserWarning):
    """A trace ended mid-record; decoding stopped at the reported offset."""


@dataclass(frozen=True)
class TraceMessageDef:
    """One message type: text id, group, ordered typed fields, ordinal."""

    id: str
    group: str
    fields: Tuple[Tuple[str, str], ...]
    numeric_id: int

    def field_kind(self, name: str) -> str:
        for fname, kind in self.fields:
            if fname == name:
                return kind
        raise TraceFormatError(f"message {self.id} has no field {name!r}")


@dataclass(frozen=True)
class TraceEvent:
    """One recorded event: ordinal, nanosecond timestamp, payload values."""

    numeric_id: int
    timestamp: int
    payload: Tuple[Union[int, bytes], ...]


@dataclass(frozen=True)
class ParseResult:
    """Definitions accepted plus (line, message) diagnostics for the rest."""

    defs: Tuple[TraceMessageDef, ...]
    errors: Tuple[Tuple[int, str], ...]

    def by_name(self, name: str) -> TraceMessageDef:
        for d in self.defs:
            if d.id == name:
                return d
        raise TraceFormatError(f"unknown message id {name!r}")


@dataclass
class RecordResult:
    """Outcome of a bulk write: accepted and rejected event counts."""

    written: int = 0
    rejected: int = 0


def _parse_format_value(value: str) -> Tuple[Tuple[str, str], ...]:
    fields: List[Tuple[str, str]] = []
    for part in value.split(":"):
        part = part.strip()
        if not part:
            raise ValueError("empty field entry")
        if "," not in part:
            raise ValueError(f"field entry {part!r} is not kind,name")
        kind, _, name = part.partition(",")
        kind, name = kind.strip(), name.strip()
        if kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {kind!r}")
        if not name:
            raise ValueError("field name is empty")
        if any(name == n for n, _ in fields):
            raise ValueError(f"duplicate field name {name!r}")
        fields.append((name, kind))
    return tuple(fields)


def parse_message_defs(text: str) -> ParseResult:
    """Parse a message-definition file.  Total: never raises on input.

    Accepted messages get numeric ids in file order; a message containing
    any bad line is dropped entirely and reported in ``errors`` with the
    offending line number (1-based).
    """
    defs: List[TraceMessageDef] = []
    errors: List[Tuple[int, str]] = []
    seen: Dict[str, int] = {}  # id -> line where first defined

    current: Optional[dict] = None

    def close_current() -> None:
        nonlocal current
        if current is None:
            return
        if not current["bad"]:
            defs.append(
                TraceMessageDef(
                    id=current["id"],
                    group=current["group"],
                    fields=tuple(current["fields"]),
                    numeric_id=len(defs),
                )
            )
        current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        indented = line[0] in (" ", "\t")
        stripped = line.strip()
        key, eq, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()

        if not indented:
            close_current()
            if key != "ID" or not eq:
                errors.append((lineno, f"expected 'ID = <name>', got {stripped!r}"))
                continue
            if not value:
                errors.append((lineno, "ID has no name"))
                continue
            duplicate = value in seen
            if duplicate:
                errors.append(
                    (lineno, f"duplicate ID {value!r} (first defined on line {seen[value]})")
                )
            else:
                seen[value] = lineno
            # A duplicate still opens a block so its indented lines attach to
            # the discarded message instead of cascading into more errors.
            current = {"id": value, "group": "", "fields": [], "bad": duplicate}
            continue

        if current is None:
            errors.append((lineno, f"{key or stripped!r} outside a message block"))
            continue
        if not eq:
            errors.append((lineno, f"malformed line {stripped!r}"))
            current["bad"] = True
            continue
        if key == "GROUP":
            current["group"] = value
        elif key == "FORMAT":
            try:
                current["fields"] = list(_parse_format_value(value))
            except ValueError as exc:
                errors.append((lineno, str(exc)))
                current["bad"] = True
        else:
            errors.append((lineno, f"unknown key {key!r}"))
            current["bad"] = True

    close_current()
    return ParseResult(defs=tuple(defs), errors=tuple(errors))


def _def_index(defs: Sequence[TraceMessageDef]) -> Dict[int, TraceMessageDef]:
    return {d.numeric_id: d for d in defs}


def encode_event(event: TraceEvent, defs: Sequence[TraceMessageDef]) -> bytes:
    """Serialize one event, validating it against its definition."""
    index = _def_index(defs)
    d = index.get(event.numeric_id)
    if d is None:
        raise TraceFormatError(f"no definition with numeric id {event.numeric_id}")
    if not 0 <= event.timestamp < (1 << 64):
        raise TraceFormatError("timestamp outside u64 range")
    if len(event.payload) != len(d.fields):
        raise TraceFormatError(
            f"{d.id}: expected {len(d.fields)} fields, got {len(event.payload)}"
        )
    out = bytearray(struct.pack("<IQ", event.numeric_id, event.timestamp))
    for (name, kind), value in zip(d.fields, event.payload):
        if kind == "int":
            if not isinstance(value, int) or isinstance(value, bool):
                raise TraceFormatError(f"{d.id}.{name}: expected int, got {type(value).__name__}")
            if not _I64_MIN <= value <= _I64_MAX:
                raise TraceFormatError(f"{d.id}.{name}: {value} outside i64 range")
            out += struct.pack("<q", value)
        else:
            if not isinstance(value, (bytes, bytearray, memoryview)):
                raise TraceFormatError(
                    f"{d.id}.{name}: expected bytes, got {type(value).__name__}"
                )
            data = bytes(value)
            out += struct.pack("<I", len(data)) + data
    return bytes(out)


def write_trace(
    fh: BinaryIO,
    events: Iterable[TraceEvent],
    defs: Sequence[TraceMessageDef],
) -> RecordResult:
    """Write header and events; nonconforming events are counted, not fatal."""
    result = RecordResult()
    fh.write(TRACE_MAGIC + struct.pack("<H", TRACE_VERSION))
    for event in events:
        try:
            fh.write(encode_event(event, defs))
        except TraceFormatError:
            result.rejected += 1
            continue
        result.written += 1
    return result


def read_trace(
    data: Union[bytes, BinaryIO], defs: Sequence[TraceMessageDef]
) -> Iterator[TraceEvent]:
    """Decode events from a trace; warns and stops at a truncated record."""
    buf = data if isinstance(data, bytes) else data.read()
    if len(buf) < 6 or buf[:4] != TRACE_MAGIC:
        raise TraceFormatError("not a trace file (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {version}")
    index = _def_index(defs)
    offset = 6
    total = len(buf)

    def truncated() -> None:
        warnings.warn(
            f"trace truncated mid-record at byte {offset}", TraceTruncatedWarning
        )

    while offset < total:
        if offset + 12 > total:
            truncated()
            return
        numeric_id, timestamp = struct.unpack_from("<IQ", buf, offset)
        pos = offset + 12
        d = index.get(numeric_id)
        if d is None:
            raise TraceFormatError(
                f"record at byte {offset} has unknown numeric id {numeric_id}"
            )
        payload: List[Union[int, bytes]] = []
        ok = True
        for _name, kind in d.fields:
            if kind == "int":
                if pos + 8 > total:
                    ok = False
                    break
                payload.append(struct.unpack_from("<q", buf, pos)[0])
                pos += 8
            else:
                if pos + 4 > total:
                    ok = False
                    break
                (length,) = struct.unpack_from("<I", buf, pos)
                pos += 4
                if pos + length > total:
                    ok = False
                    break
                payload.append(buf[pos : pos + length])
                pos += length
        if not ok:
            truncated()
            return
        yield TraceEvent(numeric_id=numeric_id, timestamp=timestamp, payload=tuple(payload))
        offset = pos


def extract(
    data: Union[bytes, BinaryIO],
    message_id: str,
    field_name: str,
    defs: Sequence[TraceMessageDef],
) -> bytes:
    """Concatenate one field's bytes across all events of the given message.

    Buffer fields contribute their raw bytes; int fields contribute their
    little-endian i64 encoding.  Output order equals trace order, which
    makes buffer extractions byte-compatible with the raw dataset files.
    """
    target = None
    for d in defs:
        if d.id == message_id:
            target = d
            break
    if target is None:
        raise TraceFormatError(f"unknown message id {message_id!r}")
    kind = target.field_kind(field_name)
    pos = [i for i, (n, _) in enumerate(target.fields) if n == field_name][0]
    out = bytearray()
    for event in read_trace(data, defs):
        if event.numeric_id != target.numeric_id:
            continue
        value = event.payload[pos]
        if kind == "int":
            out += struct.pack("<q", value)
        else:
            out += value
    return bytes(out)


class TraceRecorder:
    """Queue-decoupled trace writer: the producing side never blocks.

    ``emit`` timestamps the event (monotonic nanoseconds) and enqueues it;
    when the bounded queue is full the event is dropped and ``dropped`` is
    incremented — the counter is only ever touched by the producer.  A
    consumer thread validates, encodes, and writes.  Use as a context
    manager or call :meth:`close` to flush and join.
    """

    _SENTINEL = object()

    def __init__(
        self,
        fh: BinaryIO,
        defs: Sequence[TraceMessageDef],
        maxsize: int = 1024,
    ) -> None:
        self._fh = fh
        self._defs = tuple(defs)
        self._by_name = {d.id: d for d in self._defs}
        self._queue: "queue.Queue" = queue.Queue(maxsize=maxsize)
        self.dropped = 0
        self.written = 0
        self.rejected = 0
        self._fh.write(TRACE_MAGIC + struct.pack("<H", TRACE_VERSION))
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._closed = False
        self._thread.start()

    def emit(
        self,
        message: Union[str, int],
        values: Union[Sequence[Union[int, bytes]], Dict[str, Union[int, bytes]]],
        timestamp: Optional[int] = None,
    ) -> bool:
        """Enqueue one event; returns False (and counts) if it was dropped."""
        if self._closed:
            self.dropped += 1
            return False
        if isinstance(message, str):
            d = self._by_name.get(message)
            numeric_id = d.numeric_id if d is not None else -1
        else:
            numeric_id = int(message)
            d = _def_index(self._defs).get(numeric_id)
        if isinstance(values, dict):
            ordered = tuple(values.get(name) for name, _ in (d.fields if d else ()))
        else:
            ordered = tuple(values)
        event = TraceEvent(
            numeric_id=numeric_id,
            timestamp=time.monotonic_ns() if timestamp is None else int(timestamp),
            payload=ordered,
        )
        try:
            self._queue.put_nowait(event)
        except queue.Full:
            self.dropped += 1
            return False
        return True

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            if item is TraceRecorder._SENTINEL:
                return
            try:
                self._fh.write(encode_event(item, self._defs))
            except TraceFormatError:
                self.rejected += 1
            else:
                self.written += 1

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._queue.put(TraceRecorder._SENTINEL)  # always fits eventually
        self._thread.join()

    def __enter__(self) -> "TraceRecorder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
