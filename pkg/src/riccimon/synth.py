"""Synthetic topologies, drift traffic, and labeled event scenarios.

Scenarios compile to wire-format feed files: replaying one through the
ingest path first reproduces the base topology (one route per edge, plus
optional cross-community traffic), then applies scheduled events:

* ``leak``: announcements creating shortcut edges from an origin AS to a
  number of random remote ASes,
* ``cut``: withdrawal of every active route traversing one link,
* background drift: steady per-minute announce/withdraw churn of extra
  prefixes on random stub-adjacent links (topology preserving).

Everything is deterministic under the configured seeds.
"""

from __future__ import annotations

import ipaddress
import json
import random
import sys
from dataclasses import dataclass, field
from typing import Sequence

from .feed import (ANNOUNCE, WITHDRAW, FeedRecord, RouteTable,
                   address_count, apply_record)
from .graph import AsGraph, AsGraphSnapshot, edge_key

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

SYNTH_PEER = 64500

TOPOLOGY_KINDS = ("clique", "line", "star_pair", "barbell", "scale_free")
EVENT_KINDS = ("leak", "cut")


class ScenarioError(ValueError):
    """Scenario parameters are inconsistent or unsupported."""


class PrefixPool:
    """Sequential allocator of disjoint /len prefixes from a run of /8 blocks."""

    def __init__(self, base_octet: int, prefix_len: int, span_octets: int = 10) -> None:
        if not 8 <= prefix_len <= 32:
            raise ValueError("prefix length must be in [8, 32]")
        if not 1 <= base_octet <= base_octet + span_octets - 1 <= 223:
            raise ValueError("pool must stay inside unicast /8 space")
        self._base = base_octet << 24
        self._plen = prefix_len
        self._step = 1 << (32 - prefix_len)
        self._next = 0
        self._capacity = span_octets * (1 << (prefix_len - 8))

    def allocate(self) -> str:
        if self._next >= self._capacity:
            raise RuntimeError("prefix pool exhausted")
        addr = self._base + self._next * self._step
        self._next += 1
        return f"{ipaddress.IPv4Address(addr)}/{self._plen}"


@dataclass(frozen=True)
class Topology:
    """A generated base graph plus the routes that announce it."""

    kind: str
    snapshot: AsGraphSnapshot
    routes: tuple[tuple[str, tuple[int, ...]], ...]
    meta: dict = field(default_factory=dict)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(e.a, e.b) for e in self.snapshot.edges()]


def _edges_clique(asns: Sequence[int]) -> list[tuple[int, int]]:
    return [(a, b) for i, a in enumerate(asns) for b in asns[i + 1:]]


def _scale_free_edges(n: int, attach: int, rng: random.Random) -> list[tuple[int, int]]:
    """Preferential attachment: each arrival links to `attach` earlier vertices."""
    if n < attach + 1:
        raise ScenarioError(f"scale_free needs n > attach ({n} <= {attach})")
    edges: list[tuple[int, int]] = []
    repeated: list[int] = []
    seed_nodes = list(range(1, attach + 2))
    for i, a in enumerate(seed_nodes):
        for b in seed_nodes[i + 1:]:
            edges.append((a, b))
            repeated.extend((a, b))
    for v in range(attach + 2, n + 1):
        targets: set[int] = set()
        while len(targets) < attach:
            targets.add(rng.choice(repeated))
        for t in sorted(targets):
            edges.append((t, v))
            repeated.extend((t, v))
    return edges


# announced block sizes for the heavy-tailed profile: mostly /24s with a
# fat tail of large corporate / provider blocks
_PREFIX_MIX = ((24, 60), (22, 20), (20, 10), (18, 6), (16, 3), (14, 1))


def gen_topology(kind: str, params: dict, seed: int = 0, *,
                 base_prefix_len: int = 24,
                 prefix_profile: str = "uniform",
                 cross_traffic: dict | None = None) -> Topology:
    """Generate a deterministic base topology and its announcing routes.

    Every edge carries one route (path = the edge pair), so all counts are
    nonzero.  `prefix_profile="heavy_tail"` draws announced block sizes
    from a skewed mix instead of uniform /base_prefix_len networks.
    `cross_traffic` (barbell only) adds multi-hop routes between the two
    communities through the first bridge: keys `count` and optionally
    `prefix_len`.
    """
    if kind not in TOPOLOGY_KINDS:
        raise ScenarioError(f"unknown topology kind {kind!r}")
    rng = random.Random(seed)
    meta: dict = {}
    if kind == "clique":
        n = int(params["n"])
        edges = _edges_clique(list(range(1, n + 1)))
    elif kind == "line":
        n = int(params["n"])
        edges = [(i, i + 1) for i in range(1, n)]
    elif kind == "star_pair":
        n = int(params["n"])
        if n < 2:
            raise ScenarioError("star_pair needs star size >= 2")
        c1, c2 = 1, n + 1
        edges = [(c1, leaf) for leaf in range(2, n + 1)]
        edges += [(c2, leaf) for leaf in range(n + 2, 2 * n + 1)]
        edges.append((c1, c2))
        meta = {"centers": (c1, c2)}
    elif kind == "barbell":
        n1, n2 = int(params["n1"]), int(params["n2"])
        bridges = int(params.get("bridges", 1))
        if not 1 <= bridges <= min(n1, n2):
            raise ScenarioError("bridge count must be in [1, min(n1, n2)]")
        left = list(range(1, n1 + 1))
        right = list(range(n1 + 1, n1 + n2 + 1))
        edges = _edges_clique(left) + _edges_clique(right)
        bridge_edges = [(left[i], right[i]) for i in range(bridges)]
        edges += bridge_edges
        meta = {"left": left, "right": right, "bridges": bridge_edges}
    else:  # scale_free
        n = int(params["n"])
        attach = int(params.get("attach", 2))
        edges = _scale_free_edges(n, attach, rng)

    routes: list[tuple[str, tuple[int, ...]]] = []
    if prefix_profile == "uniform":
        pool = PrefixPool(10, base_prefix_len, span_octets=10)
        for a, b in sorted(edge_key(a, b) for a, b in edges):
            routes.append((pool.allocate(), (a, b)))
    elif prefix_profile == "heavy_tail":
        blocks = {24: (10, 4), 22: (14, 2), 20: (16, 2),
                  18: (18, 2), 16: (40, 8), 14: (48, 8)}
        pools = {plen: PrefixPool(base, plen, span_octets=span)
                 for plen, (base, span) in blocks.items()}
        lens = [plen for plen, _ in _PREFIX_MIX]
        weights = [w for _, w in _PREFIX_MIX]
        for a, b in sorted(edge_key(a, b) for a, b in edges):
            plen = rng.choices(lens, weights=weights)[0]
            routes.append((pools[plen].allocate(), (a, b)))
    else:
        raise ScenarioError(f"unknown prefix profile {prefix_profile!r}")

    if cross_traffic:
        if kind != "barbell":
            raise ScenarioError("cross_traffic is only supported on barbell")
        cpool = PrefixPool(20, int(cross_traffic.get("prefix_len", 16)),
                           span_octets=10)
        ba, bb = meta["bridges"][0]
        left, right = meta["left"], meta["right"]
        for _ in range(int(cross_traffic["count"])):
            x = rng.choice(left)
            y = rng.choice(right)
            routes.append((cpool.allocate(), (x, ba, bb, y)))

    graph = AsGraph()
    table = RouteTable()
    for prefix, path in routes:
        apply_record(table, graph,
                     FeedRecord(t=0, peer=SYNTH_PEER, kind=ANNOUNCE,
                                prefix=prefix, as_path=path))
    return Topology(kind=kind, snapshot=graph.snapshot(t=0, seq=0),
                    routes=tuple(routes), meta=meta)


def topology_equal(a: AsGraphSnapshot, b: AsGraphSnapshot) -> bool:
    """Structural equality ignoring timestamps: vertices, prefix counts, edges."""
    va = {asn: v.prefix_count for asn, v in a.vertices.items()}
    vb = {asn: v.prefix_count for asn, v in b.vertices.items()}
    if va != vb:
        return False
    ea = {(e.a, e.b): e.count for e in a.edges()}
    eb = {(e.a, e.b): e.count for e in b.edges()}
    return ea == eb


@dataclass(frozen=True)
class EventSpec:
    t: int  # seconds after base_time
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DriftSpec:
    rate: int = 0  # announce/withdraw operations per minute
    minutes: int = 0
    prefix_len: int = 24


@dataclass(frozen=True)
class LabelSpec:
    t: int
    expected: str


@dataclass(frozen=True)
class Scenario:
    """Base topology, event schedule, and ground-truth labels."""

    name: str
    topology_kind: str
    topology_params: dict
    topology_seed: int = 0
    seed: int = 0
    base_time: int = 1_700_000_000
    base_window: int = 50
    base_prefix_len: int = 24
    prefix_profile: str = "uniform"
    cross_traffic: dict | None = None
    drift: DriftSpec = field(default_factory=DriftSpec)
    events: tuple[EventSpec, ...] = ()
    labels: tuple[LabelSpec, ...] = ()

    def __post_init__(self) -> None:
        times = [e.t for e in self.events]
        if times != sorted(times):
            raise ScenarioError("event schedule must be time-ordered")
        for e in self.events:
            if e.kind not in EVENT_KINDS:
                raise ScenarioError(f"unknown event kind {e.kind!r}")
        scheduled = set(times)
        for lb in self.labels:
            if lb.t not in scheduled:
                raise ScenarioError(
                    f"label at t={lb.t} references no scheduled event")

    def labels_json_obj(self) -> list[dict]:
        return [{"t": self.base_time + lb.t, "expected": lb.expected}
                for lb in self.labels]


def scenario_from_toml(text: str | bytes) -> Scenario:
    """Parse a scenario description from TOML text."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ScenarioError(f"invalid TOML: {exc}") from exc
    if "topology" not in obj or "kind" not in obj["topology"]:
        raise ScenarioError("scenario needs a [topology] table with a kind")
    topo = dict(obj["topology"])
    kind = topo.pop("kind")
    topo_seed = int(topo.pop("seed", 0))
    drift_tab = obj.get("drift", {})
    drift = DriftSpec(rate=int(drift_tab.get("rate", 0)),
                      minutes=int(drift_tab.get("minutes", 0)),
                      prefix_len=int(drift_tab.get("prefix_len", 24)))
    events = []
    for ev in obj.get("events", []):
        ev = dict(ev)
        events.append(EventSpec(t=int(ev.pop("t")), kind=str(ev.pop("kind")),
                                params=ev))
    labels = [LabelSpec(t=int(lb["t"]), expected=str(lb["expected"]))
              for lb in obj.get("labels", [])]
    return Scenario(
        name=str(obj.get("name", "scenario")),
        topology_kind=str(kind),
        topology_params=topo,
        topology_seed=topo_seed,
        seed=int(obj.get("seed", 0)),
        base_time=int(obj.get("base_time", 1_700_000_000)),
        base_window=int(obj.get("base_window", 50)),
        base_prefix_len=int(obj.get("base_prefix_len", 24)),
        prefix_profile=str(obj.get("prefix_profile", "uniform")),
        cross_traffic=obj.get("cross_traffic"),
        drift=drift,
        events=tuple(events),
        labels=tuple(labels),
    )


@dataclass(frozen=True)
class FeedEmission:
    """The rendered feed plus the artifacts tests and the CLI care about."""

    records: tuple[FeedRecord, ...]
    topology: Topology
    labels: tuple[LabelSpec, ...]
    base_time: int

    @property
    def lines(self) -> list[str]:
        out = []
        for rec in self.records:
            if rec.kind == ANNOUNCE:
                path = " ".join(str(a) for a in rec.as_path)
                out.append(f"{rec.t}|{rec.peer}|A|{rec.prefix}|{path}")
            else:
                out.append(f"{rec.t}|{rec.peer}|W|{rec.prefix}")
        return out

    def labels_json(self) -> str:
        return json.dumps([{"t": self.base_time + lb.t, "expected": lb.expected}
                           for lb in self.labels], indent=2)


def emit_feed(scenario: Scenario) -> FeedEmission:
    """Compile a scenario into a time-ordered wire-format record stream.

    Base announcements fill the opening window; drift operations and
    scheduled events are then replayed chronologically against the set of
    active routes, so a cut withdraws exactly the routes (base, cross, or
    churn) that traverse the link at that moment.
    """
    topo = gen_topology(scenario.topology_kind, scenario.topology_params,
                        scenario.topology_seed,
                        base_prefix_len=scenario.base_prefix_len,
                        prefix_profile=scenario.prefix_profile,
                        cross_traffic=scenario.cross_traffic)
    rng = random.Random(scenario.seed)
    base = scenario.base_time
    snap = topo.snapshot
    records: list[FeedRecord] = []
    active: dict[tuple[int, str], tuple[int, ...]] = {}

    # Base graph: announcements spread across the opening window.
    n_routes = len(topo.routes)
    for i, (prefix, path) in enumerate(topo.routes):
        t = base + (i * scenario.base_window) // max(1, n_routes)
        records.append(FeedRecord(t=t, peer=SYNTH_PEER, kind=ANNOUNCE,
                                  prefix=prefix, as_path=path))
        active[(SYNTH_PEER, prefix)] = path

    by_degree = sorted(snap.asns(), key=lambda a: (snap.degree(a), a))
    stub_pool = by_degree[:max(1, len(by_degree) // 2)]

    # Chronological action plan: (t, priority, payload).  Drift slots run
    # before an event scheduled at the same second.
    actions: list[tuple[int, int, tuple]] = []
    if scenario.drift.rate > 0 and scenario.drift.minutes > 0:
        drift_start = base + 60
        for minute in range(scenario.drift.minutes):
            for op in range(scenario.drift.rate):
                t = drift_start + minute * 60 + (op * 60) // scenario.drift.rate
                actions.append((t, 0, ("drift",)))
    for ev in scenario.events:
        actions.append((base + ev.t, 1, ("event", ev)))
    actions.sort(key=lambda a: (a[0], a[1]))

    cut_edges: set[tuple[int, int]] = set()
    churn_pool = PrefixPool(100, scenario.drift.prefix_len, span_octets=30)
    churn_active: list[str] = []
    leak_pools: dict[int, PrefixPool] = {}

    for t, _, payload in actions:
        if payload[0] == "drift":
            if churn_active and rng.random() < 0.5:
                prefix = churn_active.pop(rng.randrange(len(churn_active)))
                records.append(FeedRecord(t=t, peer=SYNTH_PEER, kind=WITHDRAW,
                                          prefix=prefix))
                del active[(SYNTH_PEER, prefix)]
            else:
                for _attempt in range(16):
                    stub = rng.choice(stub_pool)
                    nbrs = [n for n in snap.neighbors(stub)
                            if edge_key(n, stub) not in cut_edges]
                    if nbrs:
                        break
                else:
                    continue
                nbr = rng.choice(nbrs)
                prefix = churn_pool.allocate()
                records.append(FeedRecord(t=t, peer=SYNTH_PEER, kind=ANNOUNCE,
                                          prefix=prefix, as_path=(nbr, stub)))
                churn_active.append(prefix)
                active[(SYNTH_PEER, prefix)] = (nbr, stub)
            continue

        ev = payload[1]
        if ev.kind == "leak":
            breadth = int(ev.params.get("breadth", 50))
            plen = int(ev.params.get("prefix_len", 14))
            origin = ev.params.get("origin")
            if origin is None:
                origin = rng.choice(stub_pool)
            origin = int(origin)
            pool = leak_pools.setdefault(
                plen, PrefixPool(60 + 10 * len(leak_pools), plen, span_octets=10))
            # The leaking AS attracts remote victims' address space: their
            # existing prefix is re-announced through the leaker (draining
            # the route that carried it) and a wide prefix follows over the
            # new shortcut edge.  Victims cluster on few upstreams so the
            # drained side of the event stays concentrated.
            near = snap.hop_distances(origin, snap.asns())
            by_upstream: dict[int, list[int]] = {}
            drained: dict[int, int] = {}
            route_of: dict[int, tuple[int, str]] = {}
            for (peer, prefix), path in sorted(active.items()):
                victim = path[-1]
                size = address_count(prefix)
                if (len(path) >= 2 and victim != origin
                        and near.get(victim, 99) >= 3
                        and not snap.has_edge(origin, victim)
                        and size > drained.get(victim, 0)):
                    if victim not in drained:
                        by_upstream.setdefault(path[-2], []).append(victim)
                    drained[victim] = size
                    route_of[victim] = (peer, prefix)
            # Victims split between transit hubs and fat-block stubs.
            # Hub victims turn the leaker into a shortcut mesh between
            # whole regions (a diffuse, many-landmark geometry change);
            # stub victims concentrate drained address space on a few
            # upstreams.  Together the change matrix gains both a broad
            # and a concentrated component.
            hub_count = breadth // 2
            by_deg = sorted(drained, key=lambda v: (-snap.degree(v), v))
            hub_pool = by_deg[:hub_count + hub_count // 2]
            rng.shuffle(hub_pool)
            victims = hub_pool[:hub_count]
            taken = set(victims)
            stub_count = breadth - len(victims)
            by_fat = [v for v in sorted(drained, key=lambda v: (-drained[v], v))
                      if v not in taken]
            stub_pool = by_fat[:stub_count + stub_count // 2]
            rng.shuffle(stub_pool)
            victims.extend(stub_pool[:stub_count])
            for v in by_fat:  # top up if the pools ran short
                if len(victims) >= breadth:
                    break
                if v not in taken and v not in victims:
                    victims.append(v)
            if len(victims) < breadth:
                raise ScenarioError("leak breadth exceeds reroutable victims")
            for i, victim in enumerate(victims):
                peer, prefix = route_of[victim]
                ti = t + (i * 10) // max(1, breadth)
                records.append(FeedRecord(
                    t=ti, peer=peer, kind=ANNOUNCE, prefix=prefix,
                    as_path=(origin, victim)))
                active[(peer, prefix)] = (origin, victim)
                if prefix in churn_active:
                    churn_active.remove(prefix)
                wide = pool.allocate()
                records.append(FeedRecord(
                    t=ti, peer=SYNTH_PEER, kind=ANNOUNCE, prefix=wide,
                    as_path=(origin, victim)))
                active[(SYNTH_PEER, wide)] = (origin, victim)
        else:  # cut
            a, b = int(ev.params["a"]), int(ev.params["b"])
            key = edge_key(a, b)
            cut_edges.add(key)
            doomed = sorted(
                (peer, prefix) for (peer, prefix), path in active.items()
                if any(edge_key(u, v) == key for u, v in zip(path, path[1:])))
            for i, (peer, prefix) in enumerate(doomed):
                records.append(FeedRecord(
                    t=t + (i * 10) // max(1, len(doomed)), peer=peer,
                    kind=WITHDRAW, prefix=prefix))
                del active[(peer, prefix)]
                if prefix in churn_active:
                    churn_active.remove(prefix)

    records.sort(key=lambda r: r.t)
    return FeedEmission(records=tuple(records), topology=topo,
                        labels=scenario.labels, base_time=base)
