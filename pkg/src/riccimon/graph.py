"""Dynamic AS-level graph, immutable snapshots, and hop-distance queries.

The mutable :class:`AsGraph` is owned by a single ingest writer.  Everything
downstream (curvature, landmarks, detection) operates on immutable
:class:`AsGraphSnapshot` objects, which are safe to share across workers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence


class UnknownAsnError(KeyError):
    """An operation referenced an ASN that is not in the graph."""


class SnapshotSchemaError(ValueError):
    """Snapshot bytes do not match the expected JSON schema."""


def edge_key(a: int, b: int) -> tuple[int, int]:
    """Normalize an unordered ASN pair so that a < b."""
    return (a, b) if a < b else (b, a)


def dedup_path(as_path: Sequence[int]) -> tuple[int, ...]:
    """Collapse consecutive duplicate ASNs (path prepending) and validate.

    Raises ValueError for an empty path or any non-positive / non-integer
    ASN, which signals a malformed feed line upstream.
    """
    out: list[int] = []
    for asn in as_path:
        if isinstance(asn, bool) or not isinstance(asn, int) or asn <= 0:
            raise ValueError(f"invalid ASN in path: {asn!r}")
        if not out or out[-1] != asn:
            out.append(asn)
    if not out:
        raise ValueError("empty AS path")
    return tuple(out)


@dataclass(frozen=True)
class AsVertex:
    asn: int
    ctime: int
    prefix_count: int


@dataclass(frozen=True)
class AsEdge:
    a: int
    b: int
    count: int


class AsGraph:
    """Mutable AS-level graph with per-vertex ctime and per-edge address counts.

    Mutation is single-writer by contract; concurrent readers must work on
    snapshots.  Vertices are never removed; edges are removed when their
    route-derived count drops to zero (see :mod:`riccimon.feed`).
    """

    def __init__(self) -> None:
        self._ctime: dict[int, int] = {}
        self._prefix_count: dict[int, int] = {}
        self._adj: dict[int, dict[int, int]] = {}

    def __contains__(self, asn: int) -> bool:
        return asn in self._ctime

    @property
    def vertex_count(self) -> int:
        return len(self._ctime)

    @property
    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self._adj.values()) // 2

    def neighbors(self, asn: int) -> tuple[int, ...]:
        if asn not in self._ctime:
            raise UnknownAsnError(asn)
        return tuple(sorted(self._adj.get(asn, ())))

    def _ensure_vertex(self, asn: int, t: int) -> None:
        if asn not in self._ctime:
            self._ctime[asn] = t
            self._prefix_count[asn] = 0
            self._adj[asn] = {}

    def touch(self, asns: Iterable[int], t: int) -> None:
        """Update ctime of existing vertices; ctime never decreases."""
        for asn in asns:
            if asn in self._ctime and t > self._ctime[asn]:
                self._ctime[asn] = t

    def upsert_path(self, as_path: Sequence[int], t: int) -> set[int]:
        """Insert the vertices and consecutive-pair edges of an AS path.

        The path is de-duplicated first (consecutive repeats collapse).
        Returns the set of touched ASNs; their ctime is set to t (monotone).
        """
        path = dedup_path(as_path)
        for asn in path:
            self._ensure_vertex(asn, t)
        self.touch(path, t)
        for a, b in zip(path, path[1:]):
            if b not in self._adj[a]:
                self._adj[a][b] = 0
                self._adj[b][a] = 0
        return set(path)

    def add_route_counts(self, path: Sequence[int], amount: int) -> None:
        """Add an address count along every consecutive pair of a deduped path."""
        for a, b in zip(path, path[1:]):
            if b not in self._adj.get(a, {}):
                raise UnknownAsnError(f"edge ({a},{b}) not present")
            self._adj[a][b] += amount
            self._adj[b][a] += amount

    def remove_route_counts(self, path: Sequence[int], amount: int) -> None:
        """Subtract counts along a path; edges reaching zero are removed."""
        for a, b in zip(path, path[1:]):
            cur = self._adj.get(a, {}).get(b)
            if cur is None:
                raise UnknownAsnError(f"edge ({a},{b}) not present")
            nxt = cur - amount
            if nxt < 0:
                raise ValueError(f"edge ({a},{b}) count would become negative")
            if nxt == 0:
                del self._adj[a][b]
                del self._adj[b][a]
            else:
                self._adj[a][b] = nxt
                self._adj[b][a] = nxt

    def set_prefix_count(self, asn: int, count: int) -> None:
        if asn not in self._ctime:
            raise UnknownAsnError(asn)
        if count < 0:
            raise ValueError("prefix count must be non-negative")
        self._prefix_count[asn] = count

    def snapshot(self, t: int, seq: int) -> "AsGraphSnapshot":
        """Produce a deep, immutable copy of the current graph state."""
        vertices = {
            asn: AsVertex(asn, self._ctime[asn], self._prefix_count[asn])
            for asn in self._ctime
        }
        edges = []
        for a, nbrs in self._adj.items():
            for b, count in nbrs.items():
                if a < b:
                    edges.append(AsEdge(a, b, count))
        return AsGraphSnapshot(t=t, seq=seq, vertices=vertices, edges=edges)


class AsGraphSnapshot:
    """Immutable, timestamped AS-level graph snapshot.

    Construction validates that every edge endpoint exists and that each
    unordered pair occurs at most once.  Instances never change after
    construction and may be shared freely across threads or processes.
    """

    __slots__ = ("t", "seq", "_vertices", "_adj", "_counts")

    def __init__(self, t: int, seq: int, vertices: Mapping[int, AsVertex],
                 edges: Iterable[AsEdge]) -> None:
        self.t = t
        self.seq = seq
        self._vertices = dict(vertices)
        self._adj: dict[int, tuple[int, ...]] = {}
        self._counts: dict[tuple[int, int], int] = {}
        adj_sets: dict[int, list[int]] = {asn: [] for asn in self._vertices}
        for e in edges:
            if e.a == e.b:
                raise ValueError(f"self-loop edge ({e.a},{e.b})")
            key = edge_key(e.a, e.b)
            if key in self._counts:
                raise ValueError(f"duplicate edge {key}")
            for end in key:
                if end not in self._vertices:
                    raise ValueError(f"edge endpoint {end} missing from vertex set")
            if e.count < 0:
                raise ValueError(f"edge {key} has negative count")
            self._counts[key] = e.count
            adj_sets[key[0]].append(key[1])
            adj_sets[key[1]].append(key[0])
        for asn, nbrs in adj_sets.items():
            self._adj[asn] = tuple(sorted(nbrs))

    # -- accessors ---------------------------------------------------------

    def __contains__(self, asn: int) -> bool:
        return asn in self._vertices

    @property
    def vertices(self) -> Mapping[int, AsVertex]:
        return MappingProxyType(self._vertices)

    @property
    def vertex_count(self) -> int:
        return len(self._vertices)

    @property
    def edge_count(self) -> int:
        return len(self._counts)

    def asns(self) -> list[int]:
        return sorted(self._vertices)

    def edges(self) -> Iterator[AsEdge]:
        for (a, b) in sorted(self._counts):
            yield AsEdge(a, b, self._counts[(a, b)])

    def neighbors(self, asn: int) -> tuple[int, ...]:
        if asn not in self._vertices:
            raise UnknownAsnError(asn)
        return self._adj[asn]

    def degree(self, asn: int) -> int:
        return len(self.neighbors(asn))

    def has_edge(self, a: int, b: int) -> bool:
        return edge_key(a, b) in self._counts

    def edge_count_between(self, a: int, b: int) -> int:
        try:
            return self._counts[edge_key(a, b)]
        except KeyError:
            raise UnknownAsnError(f"edge ({a},{b}) not present") from None

    # -- queries -----------------------------------------------------------

    def changed_since(self, t0: int) -> list[int]:
        """ASNs whose ctime is >= t0, ascending (deterministic row order)."""
        return sorted(asn for asn, v in self._vertices.items() if v.ctime >= t0)

    def hop_distances(self, src: int, targets: Iterable[int]) -> dict[int, int]:
        """Unweighted BFS distances from src to the given targets.

        Unreachable targets are absent from the result.  The search stops as
        soon as every target has been resolved.
        """
        if src not in self._vertices:
            raise UnknownAsnError(src)
        remaining = set(targets)
        found: dict[int, int] = {}
        if src in remaining:
            found[src] = 0
            remaining.discard(src)
        if not remaining:
            return found
        dist = {src: 0}
        queue = deque((src,))
        while queue and remaining:
            u = queue.popleft()
            du = dist[u]
            for v in self._adj[u]:
                if v not in dist:
                    dist[v] = du + 1
                    if v in remaining:
                        found[v] = du + 1
                        remaining.discard(v)
                        if not remaining:
                            return found
                    queue.append(v)
        return found

    def hop_distance(self, src: int, dst: int) -> int | None:
        return self.hop_distances(src, (dst,)).get(dst)

    # -- equality ----------------------------------------------------------

    def structurally_equal(self, other: "AsGraphSnapshot") -> bool:
        """Content equality ignoring (t, seq)."""
        return self._vertices == other._vertices and self._counts == other._counts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AsGraphSnapshot):
            return NotImplemented
        return (self.t, self.seq) == (other.t, other.seq) and self.structurally_equal(other)

    def __hash__(self) -> int:  # identity hash; snapshots are heavyweight
        return object.__hash__(self)

    def __repr__(self) -> str:
        return (f"AsGraphSnapshot(t={self.t}, seq={self.seq}, "
                f"vertices={self.vertex_count}, edges={self.edge_count})")


# -- serialization ----------------------------------------------------------

def export_snapshot(snap: AsGraphSnapshot) -> bytes:
    """Serialize a snapshot to canonical JSON bytes (UTF-8, stable order)."""
    obj = {
        "t": snap.t,
        "seq": snap.seq,
        "vertices": [
            {"asn": v.asn, "ctime": v.ctime, "prefixes": v.prefix_count}
            for v in (snap.vertices[a] for a in snap.asns())
        ],
        "edges": [
            {"a": e.a, "b": e.b, "count": e.count} for e in snap.edges()
        ],
    }
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def _expect_int(value: object, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SnapshotSchemaError(f"{where}: expected integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise SnapshotSchemaError(f"{where}: value {value} below minimum {minimum}")
    return value


def import_snapshot(data: bytes | str) -> AsGraphSnapshot:
    """Parse snapshot JSON, validating the schema with field diagnostics."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SnapshotSchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SnapshotSchemaError("top level: expected object")
    for field in ("t", "seq", "vertices", "edges"):
        if field not in obj:
            raise SnapshotSchemaError(f"{field}: missing field")
    t = _expect_int(obj["t"], "t")
    seq = _expect_int(obj["seq"], "seq")
    if not isinstance(obj["vertices"], list):
        raise SnapshotSchemaError("vertices: expected array")
    if not isinstance(obj["edges"], list):
        raise SnapshotSchemaError("edges: expected array")
    vertices: dict[int, AsVertex] = {}
    for i, item in enumerate(obj["vertices"]):
        where = f"vertices[{i}]"
        if not isinstance(item, dict):
            raise SnapshotSchemaError(f"{where}: expected object")
        asn = _expect_int(item.get("asn"), f"{where}.asn", minimum=1)
        ctime = _expect_int(item.get("ctime"), f"{where}.ctime")
        prefixes = _expect_int(item.get("prefixes"), f"{where}.prefixes", minimum=0)
        if asn in vertices:
            raise SnapshotSchemaError(f"{where}.asn: duplicate ASN {asn}")
        vertices[asn] = AsVertex(asn, ctime, prefixes)
    edges: list[AsEdge] = []
    for i, item in enumerate(obj["edges"]):
        where = f"edges[{i}]"
        if not isinstance(item, dict):
            raise SnapshotSchemaError(f"{where}: expected object")
        a = _expect_int(item.get("a"), f"{where}.a", minimum=1)
        b = _expect_int(item.get("b"), f"{where}.b", minimum=1)
        count = _expect_int(item.get("count"), f"{where}.count", minimum=0)
        if a == b:
            raise SnapshotSchemaError(f"{where}: self-loop ({a},{b})")
        for end, name in ((a, "a"), (b, "b")):
            if end not in vertices:
                raise SnapshotSchemaError(f"{where}.{name}: unknown endpoint {end}")
        edges.append(AsEdge(a, b, count))
    try:
        return AsGraphSnapshot(t=t, seq=seq, vertices=vertices, edges=edges)
    except ValueError as exc:
        raise SnapshotSchemaError(str(exc)) from exc
