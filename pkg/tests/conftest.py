"""Shared fixtures and graph-building helpers."""

from __future__ import annotations

from riccimon.graph import AsEdge, AsGraph, AsGraphSnapshot, AsVertex, edge_key


def make_snapshot(edges, counts=None, isolated=(), t=0, seq=0,
                  default_count=256, ctimes=None):
    """Snapshot from an edge list; counts may be a dict {(a, b): count}."""
    counts = counts or {}
    ctimes = ctimes or {}
    vertices = {}
    edge_objs = []
    seen = set()
    for a, b in edges:
        key = edge_key(a, b)
        if key in seen:
            continue
        seen.add(key)
        edge_objs.append(AsEdge(key[0], key[1],
                                counts.get(key, counts.get((key[1], key[0]),
                                                           default_count))))
        for asn in key:
            if asn not in vertices:
                vertices[asn] = AsVertex(asn, ctimes.get(asn, 0), 0)
    for asn in isolated:
        vertices[asn] = AsVertex(asn, ctimes.get(asn, 0), 0)
    return AsGraphSnapshot(t=t, seq=seq, vertices=vertices, edges=edge_objs)


def clique_edges(asns):
    asns = list(asns)
    return [(a, b) for i, a in enumerate(asns) for b in asns[i + 1:]]


def line_edges(n, start=1):
    return [(start + i, start + i + 1) for i in range(n - 1)]


def star_pair_edges(n):
    """Two n-vertex stars (centers 1 and n+1) joined center to center."""
    edges = [(1, leaf) for leaf in range(2, n + 1)]
    edges += [(n + 1, leaf) for leaf in range(n + 2, 2 * n + 1)]
    edges.append((1, n + 1))
    return edges


def graph_from_paths(paths, t=0):
    g = AsGraph()
    for path in paths:
        g.upsert_path(path, t)
    return g
