"""Independent reference implementations used to cross-check the library.

These stay deliberately separate from the code under test: the transport
oracle enumerates every basic feasible solution of the transportation
polytope (vertices correspond to spanning trees of the bipartite support
graph) instead of pivoting, and curvature oracles recompute from scratch.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _tree_bases(m: int, n: int):
    """All spanning-tree bases of the m x n transportation problem.

    Returns (cell_indices, inverses): for each spanning tree of K_{m,n},
    the (m+n-1) basis cells and the inverse of its constraint submatrix
    (row sums plus all but the last column sum).
    """
    cells = [(i, j) for i in range(m) for j in range(n)]
    k = m + n - 1
    trees = []
    for subset in itertools.combinations(range(len(cells)), k):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        for idx in subset:
            i, j = cells[idx]
            ri, cj = find(i), find(m + j)
            if ri == cj:
                acyclic = False
                break
            parent[ri] = cj
        if acyclic:
            trees.append(subset)
    mats = np.zeros((len(trees), k, k))
    for t, subset in enumerate(trees):
        for c, idx in enumerate(subset):
            i, j = cells[idx]
            mats[t, i, c] = 1.0
            if j < n - 1:
                mats[t, m + j, c] = 1.0
    cell_idx = np.array([[cells[idx] for idx in subset] for subset in trees])
    return cell_idx, np.linalg.inv(mats)


def brute_force_min_cost(a, b, d) -> float:
    """Minimum transport cost over every basic feasible solution."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    m, n = d.shape
    # spanning trees of K_{m,n} number m^(n-1) * n^(m-1); keep it enumerable
    assert m ** (n - 1) * n ** (m - 1) <= 200_000, "support too large to enumerate"
    cell_idx, inv = _tree_bases(m, n)
    rhs = np.concatenate([a, b[:-1]])
    flows = inv @ rhs
    feasible = np.all(flows >= -1e-9, axis=1)
    assert feasible.any(), "no basic feasible solution found"
    costs = np.sum(flows * d[cell_idx[:, :, 0], cell_idx[:, :, 1]], axis=1)
    return float(np.min(costs[feasible]))


def lp_min_cost(a, b, d) -> float:
    """Transport cost from an off-the-shelf LP solver (scipy HiGHS)."""
    from scipy.optimize import linprog

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    m, n = d.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    res = linprog(d.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def min_cost_auto(a, b, d) -> float:
    """Brute force when enumerable, LP reference otherwise."""
    m, n = np.asarray(d).shape
    if m ** (n - 1) * n ** (m - 1) <= 200_000:
        return brute_force_min_cost(a, b, d)
    return lp_min_cost(a, b, d)


def bfs_distances(adj: dict[int, set[int]], src: int) -> dict[int, int]:
    """Plain level-order BFS over an adjacency dict."""
    dist = {src: 0}
    frontier = [src]
    level = 0
    while frontier:
        level += 1
        nxt = []
        for u in frontier:
            for v in adj.get(u, ()):
                if v not in dist:
                    dist[v] = level
                    nxt.append(v)
        frontier = nxt
    return dist


def snapshot_adjacency(snap) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {asn: set() for asn in snap.asns()}
    for e in snap.edges():
        adj[e.a].add(e.b)
        adj[e.b].add(e.a)
    return adj


def curvature_from_scratch(snap, x: int, y: int, alpha: float,
                           cost_fn=min_cost_auto) -> float | None:
    """Recompute one curvature value independently of the library path."""
    adj = snapshot_adjacency(snap)
    dist_x = bfs_distances(adj, x)
    if y not in dist_x:
        return None

    def mass(z):
        nbrs = sorted(adj[z])
        if not nbrs:
            return [(z, 1.0)]
        counts = [snap.edge_count_between(z, nb) for nb in nbrs]
        total = sum(counts)
        weights = ([c / total for c in counts] if total > 0
                   else [1.0 / len(nbrs)] * len(nbrs))
        if alpha == 0.0:
            return list(zip(nbrs, weights))
        return [(z, alpha)] + [(nb, (1 - alpha) * w)
                               for nb, w in zip(nbrs, weights)]

    mx, my = mass(x), mass(y)
    d = np.array([[bfs_distances(adj, u)[v] for v, _ in my] for u, _ in mx],
                 dtype=float)
    cost = cost_fn([w for _, w in mx], [w for _, w in my], d)
    return 1.0 - cost / dist_x[y]
