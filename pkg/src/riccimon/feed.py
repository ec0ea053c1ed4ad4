"""Update/withdrawal feed parsing, route table, and incremental graph upkeep.

Wire format, one record per line (UTF-8, LF terminated):

    <unix_ts>|<peer_asn>|A|<cidr>|<space-separated as_path>
    <unix_ts>|<peer_asn>|W|<cidr>

Edge counts carry the number of IPv4 addresses reachable over the link:
every routed (peer, prefix) entry contributes 2**(32 - prefix_len) to each
edge its path traverses.  Overlapping prefixes are not deduplicated.
"""

from __future__ import annotations

import ipaddress
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from .graph import AsGraph, AsGraphSnapshot, dedup_path, edge_key

log = logging.getLogger(__name__)

ANNOUNCE = "A"
WITHDRAW = "W"


class FeedParseError(ValueError):
    """A feed line did not match the wire format.

    Carries the 1-based field index and 0-based character column of the
    offending field so callers can emit precise diagnostics.
    """

    def __init__(self, message: str, field: int, column: int) -> None:
        super().__init__(f"field {field} (col {column}): {message}")
        self.field = field
        self.column = column


@dataclass(frozen=True)
class FeedRecord:
    t: int
    peer: int
    kind: str
    prefix: str
    as_path: tuple[int, ...] = ()


def address_count(prefix: str) -> int:
    """Number of IPv4 addresses covered by a CIDR prefix: 2**(32 - len)."""
    plen = int(prefix.rsplit("/", 1)[1])
    return 1 << (32 - plen)


def parse_feed_line(line: str) -> FeedRecord:
    """Parse one wire-format line into a FeedRecord.

    Raises FeedParseError with field/column information on malformed input;
    the caller decides whether to skip or abort (streaming readers skip).
    """
    text = line.rstrip("\n")
    fields = text.split("|")
    columns = [0]
    for f in fields[:-1]:
        columns.append(columns[-1] + len(f) + 1)

    def fail(idx: int, message: str) -> FeedParseError:
        return FeedParseError(message, field=idx + 1, column=columns[idx])

    if len(fields) < 4:
        raise fail(len(fields) - 1, f"expected at least 4 fields, got {len(fields)}")
    if not fields[0].isdigit():
        raise fail(0, f"timestamp must be an unsigned integer, got {fields[0]!r}")
    t = int(fields[0])
    if not fields[1].isdigit() or int(fields[1]) == 0:
        raise fail(1, f"peer ASN must be a positive integer, got {fields[1]!r}")
    peer = int(fields[1])
    kind = fields[2]
    if kind not in (ANNOUNCE, WITHDRAW):
        raise fail(2, f"record kind must be 'A' or 'W', got {kind!r}")
    try:
        net = ipaddress.IPv4Network(fields[3], strict=False)
    except (ipaddress.AddressValueError, ipaddress.NetmaskValueError, ValueError) as exc:
        raise fail(3, f"invalid IPv4 CIDR {fields[3]!r}: {exc}") from exc
    prefix = str(net)

    if kind == WITHDRAW:
        if len(fields) != 4:
            raise fail(4, "withdrawal must have exactly 4 fields")
        return FeedRecord(t=t, peer=peer, kind=WITHDRAW, prefix=prefix)

    if len(fields) != 5:
        raise fail(3, "announcement must have exactly 5 fields")
    tokens = fields[4].split()
    if not tokens:
        raise fail(4, "announcement has empty AS path")
    path = []
    for tok in tokens:
        if not tok.isdigit():
            # brace-delimited AS_SETs and any other non-numeric token
            raise fail(4, f"unsupported AS path token {tok!r}")
        asn = int(tok)
        if asn == 0:
            raise fail(4, "ASN 0 is not a valid path element")
        path.append(asn)
    return FeedRecord(t=t, peer=peer, kind=ANNOUNCE, prefix=prefix, as_path=tuple(path))


def read_feed(lines: Iterable[str],
              on_error: Callable[[int, str, FeedParseError], None] | None = None,
              ) -> Iterator[FeedRecord]:
    """Parse a line stream, skipping malformed lines (the stream never aborts)."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield parse_feed_line(line)
        except FeedParseError as exc:
            if on_error is not None:
                on_error(lineno, line, exc)
            else:
                log.warning("skipping malformed feed line %d: %s", lineno, exc)


class RouteTable:
    """Active (peer, prefix) -> AS path map plus per-origin prefix refcounts.

    Paths are stored in de-duplicated form; the origin of a route is the
    final ASN of its deduped path.  prefix_count(origin) is the number of
    distinct prefixes currently originated by that AS across all peers.
    """

    def __init__(self) -> None:
        self._routes: dict[tuple[int, str], tuple[int, ...]] = {}
        self._origin_prefixes: dict[int, Counter] = {}

    def __len__(self) -> int:
        return len(self._routes)

    def get(self, peer: int, prefix: str) -> tuple[int, ...] | None:
        return self._routes.get((peer, prefix))

    def items(self):
        return self._routes.items()

    def origin_prefix_count(self, asn: int) -> int:
        return len(self._origin_prefixes.get(asn, ()))

    def put(self, peer: int, prefix: str, path: tuple[int, ...]) -> None:
        key = (peer, prefix)
        if key in self._routes:
            raise ValueError(f"route {key} already active; pop it first")
        self._routes[key] = path
        origin = path[-1]
        counter = self._origin_prefixes.setdefault(origin, Counter())
        counter[prefix] += 1

    def pop(self, peer: int, prefix: str) -> tuple[int, ...] | None:
        path = self._routes.pop((peer, prefix), None)
        if path is None:
            return None
        origin = path[-1]
        counter = self._origin_prefixes[origin]
        counter[prefix] -= 1
        if counter[prefix] == 0:
            del counter[prefix]
        if not counter:
            del self._origin_prefixes[origin]
        return path


def apply_record(table: RouteTable, graph: AsGraph, rec: FeedRecord) -> set[int]:
    """Apply one feed record, keeping counts and ctimes consistent.

    ANNOUNCE replaces any prior route for (peer, prefix); WITHDRAW removes
    it.  Returns the union of ASNs on the old and new paths (the set whose
    ctime was touched).  A withdrawal for an unknown route is a logged no-op.
    """
    amount = address_count(rec.prefix)
    touched: set[int] = set()

    old = table.pop(rec.peer, rec.prefix)
    if old is not None:
        graph.remove_route_counts(old, amount)
        graph.set_prefix_count(old[-1], table.origin_prefix_count(old[-1]))
        touched.update(old)

    if rec.kind == ANNOUNCE:
        path = dedup_path(rec.as_path)
        graph.upsert_path(path, rec.t)
        graph.add_route_counts(path, amount)
        table.put(rec.peer, rec.prefix, path)
        graph.set_prefix_count(path[-1], table.origin_prefix_count(path[-1]))
        touched.update(path)
    elif old is None:
        log.debug("withdraw for unknown route (%d, %s)", rec.peer, rec.prefix)
        return set()

    graph.touch(touched, rec.t)
    return touched


def recompute_counts(table: RouteTable) -> tuple[dict[tuple[int, int], int], dict[int, int]]:
    """Recompute edge counts and origin prefix counts from scratch.

    Independent of the incremental bookkeeping in apply_record; used as the
    conservation oracle.  Returns ({edge: count}, {origin: prefix_count}).
    """
    edges: dict[tuple[int, int], int] = {}
    origins: dict[int, set[str]] = {}
    for (peer, prefix), path in table.items():
        amount = address_count(prefix)
        for a, b in zip(path, path[1:]):
            key = edge_key(a, b)
            edges[key] = edges.get(key, 0) + amount
        origins.setdefault(path[-1], set()).add(prefix)
    return edges, {asn: len(prefixes) for asn, prefixes in origins.items()}


def run_ingest(records: Iterable[FeedRecord], interval: int = 60, *,
               graph: AsGraph | None = None,
               table: RouteTable | None = None,
               start_seq: int = 1,
               regression_tolerance: int = 5) -> Iterator[AsGraphSnapshot]:
    """Replay a record stream, emitting a snapshot per interval of feed time.

    Windows are aligned to the first record's timestamp.  A snapshot is
    emitted for every elapsed interval (including unchanged ones), and a
    final snapshot covers the trailing partial window.  The warm-up phase is
    not suppressed.  Records regressing in time by more than the tolerance
    are warned about but still applied.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    graph = graph if graph is not None else AsGraph()
    table = table if table is not None else RouteTable()
    window_end: int | None = None
    seq = start_seq
    last_t: int | None = None
    pending = False
    for rec in records:
        if last_t is not None and rec.t < last_t - regression_tolerance:
            log.warning("feed time regressed %ds (from %d to %d); record applied",
                        last_t - rec.t, last_t, rec.t)
        last_t = rec.t if last_t is None else max(last_t, rec.t)
        if window_end is None:
            window_end = rec.t + interval
        while rec.t >= window_end:
            yield graph.snapshot(t=window_end, seq=seq)
            seq += 1
            window_end += interval
        apply_record(table, graph, rec)
        pending = True
    if pending:
        assert window_end is not None
        yield graph.snapshot(t=window_end, seq=seq)
