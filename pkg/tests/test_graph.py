import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccimon.graph import (
    AsEdge,
    AsGraph,
    AsGraphSnapshot,
    AsVertex,
    SnapshotSchemaError,
    UnknownAsnError,
    dedup_path,
    export_snapshot,
    import_snapshot,
)

from conftest import clique_edges, make_snapshot


class TestDedupPath:
    def test_collapses_consecutive_repeats(self):
        assert dedup_path([65001, 65002, 65002, 65003]) == (65001, 65002, 65003)

    def test_single_asn(self):
        assert dedup_path([65001]) == (65001,)

    @pytest.mark.parametrize("bad", [[], [0], [1, 0, 2], [-5], [1, "x"], [True]])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            dedup_path(bad)


class TestUpsertPath:
    def test_prepend_dedup_example(self):
        g = AsGraph()
        touched = g.upsert_path([65001, 65002, 65002, 65003], t=10)
        assert touched == {65001, 65002, 65003}
        snap = g.snapshot(t=10, seq=1)
        assert snap.asns() == [65001, 65002, 65003]
        assert {(e.a, e.b) for e in snap.edges()} == {(65001, 65002), (65002, 65003)}

    def test_single_vertex_no_edge(self):
        g = AsGraph()
        g.upsert_path([65001], t=1)
        assert g.vertex_count == 1
        assert g.edge_count == 0

    def test_two_paths_share_edge(self):
        g = AsGraph()
        g.upsert_path([1, 2, 3], t=1)
        g.upsert_path([3, 2, 4], t=2)
        snap = g.snapshot(t=2, seq=1)
        assert snap.vertex_count == 4
        assert {(e.a, e.b) for e in snap.edges()} == {(1, 2), (2, 3), (2, 4)}

    def test_ctime_set_and_monotone(self):
        g = AsGraph()
        g.upsert_path([1, 2], t=100)
        g.upsert_path([2, 3], t=50)  # stale time never lowers ctime
        snap = g.snapshot(t=100, seq=1)
        assert snap.vertices[2].ctime == 100
        assert snap.vertices[3].ctime == 50


class TestSnapshot:
    def test_empty_graph(self):
        snap = AsGraph().snapshot(t=0, seq=0)
        assert snap.vertex_count == 0
        assert snap.edge_count == 0

    def test_immutable_after_later_mutations(self):
        g = AsGraph()
        g.upsert_path([1, 2, 3], t=1)
        snap = g.snapshot(t=1, seq=1)
        g.upsert_path([3, 4], t=2)
        g.add_route_counts((1, 2), 256)
        assert snap.vertex_count == 3
        assert snap.edge_count_between(1, 2) == 0

    def test_repeat_snapshot_structurally_equal(self):
        g = AsGraph()
        g.upsert_path([1, 2], t=5)
        s1 = g.snapshot(t=5, seq=1)
        s2 = g.snapshot(t=6, seq=2)
        assert s1.structurally_equal(s2)
        assert s1 != s2

    def test_edge_endpoint_validation(self):
        with pytest.raises(ValueError, match="endpoint"):
            AsGraphSnapshot(t=0, seq=0,
                            vertices={1: AsVertex(1, 0, 0)},
                            edges=[AsEdge(1, 2, 0)])

    def test_duplicate_edge_rejected(self):
        verts = {1: AsVertex(1, 0, 0), 2: AsVertex(2, 0, 0)}
        with pytest.raises(ValueError, match="duplicate"):
            AsGraphSnapshot(t=0, seq=0, vertices=verts,
                            edges=[AsEdge(1, 2, 0), AsEdge(2, 1, 5)])


class TestChangedSince:
    def test_zero_returns_all(self):
        snap = make_snapshot([(1, 2), (2, 3)], ctimes={1: 5, 2: 9, 3: 1})
        assert snap.changed_since(0) == [1, 2, 3]

    def test_above_max_returns_empty(self):
        snap = make_snapshot([(1, 2)], ctimes={1: 5, 2: 9})
        assert snap.changed_since(10) == []

    def test_mixed_ctimes(self):
        snap = make_snapshot([(10, 20), (20, 30)],
                             ctimes={10: 10, 20: 20, 30: 30})
        assert snap.changed_since(15) == [20, 30]

    def test_monotone_in_t0(self):
        snap = make_snapshot([(1, 2), (2, 3), (3, 4)],
                             ctimes={1: 3, 2: 7, 3: 7, 4: 11})
        for t0, t1 in [(0, 5), (5, 8), (8, 12)]:
            assert set(snap.changed_since(t1)) <= set(snap.changed_since(t0))


class TestHopDistances:
    def test_line(self):
        snap = make_snapshot([(1, 2), (2, 3)])
        assert snap.hop_distances(1, {3}) == {3: 2}

    def test_disconnected(self):
        snap = make_snapshot([(1, 2), (3, 4)])
        assert snap.hop_distances(1, {3, 4}) == {}

    def test_clique_all_one(self):
        snap = make_snapshot(clique_edges(range(1, 6)))
        dist = snap.hop_distances(1, {2, 3, 4, 5})
        assert dist == {2: 1, 3: 1, 4: 1, 5: 1}

    def test_unknown_src(self):
        snap = make_snapshot([(1, 2)])
        with pytest.raises(UnknownAsnError):
            snap.hop_distances(99, {1})

    def test_self_distance_zero(self):
        snap = make_snapshot([(1, 2)])
        assert snap.hop_distances(1, {1}) == {1: 0}

    @given(st.lists(st.tuples(st.integers(1, 12), st.integers(1, 12)),
                    min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_metric_properties(self, pairs):
        edges = [(a, b) for a, b in pairs if a != b]
        if not edges:
            return
        snap = make_snapshot(edges)
        asns = snap.asns()[:6]
        dist = {a: snap.hop_distances(a, asns) for a in asns}
        for x in asns:
            assert dist[x][x] == 0
            for y in asns:
                assert dist[x].get(y) == dist[y].get(x)
                for z in asns:
                    if y in dist[x] and z in dist[y]:
                        assert dist[x][z] <= dist[x][y] + dist[y][z]


class TestSerialization:
    def test_empty_snapshot_bytes(self):
        snap = AsGraph().snapshot(t=0, seq=0)
        assert export_snapshot(snap) == b'{"t":0,"seq":0,"vertices":[],"edges":[]}'
        assert import_snapshot(export_snapshot(snap)).structurally_equal(snap)

    def test_round_trip_bit_exact(self):
        g = AsGraph()
        g.upsert_path([1, 2], t=7)
        g.add_route_counts((1, 2), 512)
        g.set_prefix_count(2, 3)
        snap = g.snapshot(t=9, seq=4)
        blob = export_snapshot(snap)
        again = import_snapshot(blob)
        assert again == snap
        assert export_snapshot(again) == blob

    def test_corrupt_field_type_names_field(self):
        blob = json.dumps({"t": 0, "seq": 0,
                           "vertices": [{"asn": 1, "ctime": "late", "prefixes": 0}],
                           "edges": []})
        with pytest.raises(SnapshotSchemaError, match=r"vertices\[0\]\.ctime"):
            import_snapshot(blob)

    def test_unknown_edge_endpoint_diagnosed(self):
        blob = json.dumps({"t": 0, "seq": 0,
                           "vertices": [{"asn": 1, "ctime": 0, "prefixes": 0}],
                           "edges": [{"a": 1, "b": 9, "count": 0}]})
        with pytest.raises(SnapshotSchemaError, match=r"edges\[0\]\.b"):
            import_snapshot(blob)

    def test_invalid_json(self):
        with pytest.raises(SnapshotSchemaError, match="invalid JSON"):
            import_snapshot(b"{nope")

    @given(st.lists(st.tuples(st.integers(1, 40), st.integers(1, 40)),
                    max_size=25),
           st.integers(0, 10**9), st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_identity(self, pairs, t, seq):
        edges = [(a, b) for a, b in pairs if a != b]
        snap = make_snapshot(edges, t=t, seq=seq)
        assert import_snapshot(export_snapshot(snap)) == snap
