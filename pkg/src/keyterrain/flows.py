"""Flow record ingestion: parsing, ordering, and deduplication."""

from __future__ import annotations

import csv
import heapq
import ipaddress
import tempfile
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, NamedTuple

CANONICAL_COLUMNS = ("start_ts", "end_ts", "src_ip", "dst_ip", "src_port", "dst_port")


class FlowParseError(ValueError):
    """Malformed flow input; carries the 1-based line number of the offending row."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class PortPair(NamedTuple):
    """Ordered (source, destination) transport port pair; (80, 443) != (443, 80)."""

    src_port: int
    dst_port: int


@dataclass
class FlowRecord:
    """One directed IP flow. Timestamps are integral milliseconds since epoch.

    Self-flows (src_ip == dst_ip) are legal and become self-loop edges
    downstream.
    """

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    start_ts: int
    end_ts: int

    def __post_init__(self):
        if not 0 <= self.src_port <= 65535:
            raise ValueError(f"src_port out of range: {self.src_port}")
        if not 0 <= self.dst_port <= 65535:
            raise ValueError(f"dst_port out of range: {self.dst_port}")
        if self.start_ts > self.end_ts:
            raise ValueError(f"start_ts {self.start_ts} after end_ts {self.end_ts}")

    def port_pair(self) -> PortPair:
        return PortPair(self.src_port, self.dst_port)

    def dedupe_key(self) -> tuple:
        # end_ts deliberately excluded: re-exports of the same flow with a
        # refreshed end timestamp must still collapse.
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.start_ts)


@dataclass
class ParseStats:
    """Counters filled in while parse_flows runs with on_error="skip"."""

    rows: int = 0
    parsed: int = 0
    skipped: int = 0
    errors: list = field(default_factory=list)

    _MAX_RECORDED_ERRORS = 100

    def record_error(self, line_no: int, message: str) -> None:
        self.skipped += 1
        if len(self.errors) < self._MAX_RECORDED_ERRORS:
            self.errors.append((line_no, message))


def _canonical_ip(text: str, cache: dict) -> str:
    text = text.strip()
    try:
        return cache[text]
    except KeyError:
        pass
    try:
        canonical = str(ipaddress.ip_address(text))
    except ValueError:
        raise ValueError(f"bad IP address {text!r}") from None
    cache[text] = canonical
    return canonical


def _parse_port(text: str) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise ValueError(f"bad port {text!r}") from None
    if not 0 <= value <= 65535:
        raise ValueError(f"port out of range: {value}")
    return value


def _parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        # sub-millisecond precision is truncated on ingest
        return int(float(text))
    except (ValueError, OverflowError):
        raise ValueError(f"bad timestamp {text!r}") from None


def parse_flows(
    lines: Iterable[str],
    columns: Mapping[str, str] | None = None,
    on_error: str = "abort",
    stats: ParseStats | None = None,
) -> Iterator[FlowRecord]:
    """Yield one FlowRecord per data row of delimiter-separated text.

    ``lines`` is any iterable of text lines whose first row is a header.
    ``columns`` maps the six required field names (see CANONICAL_COLUMNS) to
    the header names actually used in the file; omitted fields default to
    their canonical names. Extra columns are ignored, which also lets biflow
    exports be ingested by simply not mapping the reverse-direction counters.

    Rows are streamed, never buffered. A malformed row (wrong arity,
    unparsable IP/port/timestamp, start after end) raises FlowParseError
    when ``on_error`` is "abort", or is counted in ``stats`` and skipped
    when it is "skip".
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    reader = csv.reader(lines)
    try:
        header = [name.strip() for name in next(reader)]
    except StopIteration:
        raise FlowParseError(1, "missing header row") from None

    mapping = dict(columns or {})
    unknown = set(mapping) - set(CANONICAL_COLUMNS)
    if unknown:
        raise ValueError(f"unknown column mapping keys: {sorted(unknown)}")
    positions = []
    for semantic in CANONICAL_COLUMNS:
        name = mapping.get(semantic, semantic)
        try:
            positions.append(header.index(name))
        except ValueError:
            raise FlowParseError(1, f"missing column {name!r}") from None
    i_start, i_end, i_src, i_dst, i_sport, i_dport = positions

    arity = len(header)
    ip_cache: dict[str, str] = {}
    for row in reader:
        line_no = reader.line_num
        if stats is not None:
            stats.rows += 1
        try:
            if len(row) != arity:
                raise ValueError(f"expected {arity} fields, got {len(row)}")
            record = FlowRecord(
                src_ip=_canonical_ip(row[i_src], ip_cache),
                dst_ip=_canonical_ip(row[i_dst], ip_cache),
                src_port=_parse_port(row[i_sport]),
                dst_port=_parse_port(row[i_dport]),
                start_ts=_parse_timestamp(row[i_start]),
                end_ts=_parse_timestamp(row[i_end]),
            )
        except ValueError as exc:
            if on_error == "abort":
                raise FlowParseError(line_no, str(exc)) from exc
            if stats is not None:
                stats.record_error(line_no, str(exc))
            continue
        if stats is not None:
            stats.parsed += 1
        yield record


def write_flows(records: Iterable[FlowRecord], out: IO[str]) -> int:
    """Write records as canonical CSV (header plus one row each); returns the count."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    count = 0
    for rec in records:
        writer.writerow(
            (rec.start_ts, rec.end_ts, rec.src_ip, rec.dst_ip, rec.src_port, rec.dst_port)
        )
        count += 1
    return count


def _spill_chunk(chunk: list[FlowRecord]) -> IO[str]:
    spill = tempfile.TemporaryFile("w+", encoding="utf-8")
    for rec in chunk:
        spill.write(
            f"{rec.start_ts},{rec.end_ts},{rec.src_ip},{rec.dst_ip},{rec.src_port},{rec.dst_port}\n"
        )
    spill.seek(0)
    return spill


def _read_spill(spill: IO[str]) -> Iterator[FlowRecord]:
    for line in spill:
        start, end, src, dst, sport, dport = line.rstrip("\n").split(",")
        yield FlowRecord(src, dst, int(sport), int(dport), int(start), int(end))


def sort_flows(
    records: Iterable[FlowRecord],
    key: str = "start",
    chunk_size: int = 500_000,
) -> Iterator[FlowRecord]:
    """Stable sort by the chosen timestamp; key="none" passes input through unchanged.

    Inputs larger than ``chunk_size`` records are sorted in chunks spilled to
    temporary files and merged back, so the full input never has to fit in
    memory. Ties keep their original relative order in either path.
    """
    if key == "none":
        yield from records
        return
    if key not in ("start", "end"):
        raise ValueError(f"sort key must be 'start', 'end' or 'none', got {key!r}")
    attr = "start_ts" if key == "start" else "end_ts"

    def sort_key(rec: FlowRecord) -> int:
        return getattr(rec, attr)

    spills: list[IO[str]] = []
    chunk: list[FlowRecord] = []
    try:
        for rec in records:
            chunk.append(rec)
            if len(chunk) >= chunk_size:
                chunk.sort(key=sort_key)
                spills.append(_spill_chunk(chunk))
                chunk = []
        chunk.sort(key=sort_key)
        if not spills:
            yield from chunk
            return
        if chunk:
            spills.append(_spill_chunk(chunk))
        # heapq.merge breaks ties in favor of earlier iterables, and chunks are
        # spilled in input order, so the merge stays stable overall.
        yield from heapq.merge(*(_read_spill(f) for f in spills), key=sort_key)
    finally:
        for spill in spills:
            spill.close()


def dedupe_flows(records: Iterable[FlowRecord]) -> Iterator[FlowRecord]:
    """Keep the first record per (src_ip, dst_ip, src_port, dst_port, start_ts).

    Used when preparing the learning graph only; the streaming phase consumes
    every flow.
    """
    seen: set[tuple] = set()
    for rec in records:
        k = rec.dedupe_key()
        if k not in seen:
            seen.add(k)
            yield rec
