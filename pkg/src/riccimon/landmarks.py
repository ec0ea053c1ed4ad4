"""Landmark selection strategies and their quality scores.

A landmark set R is scored by neighborhood diversity

    S1(R) = |union of N(v) for v in R| / sum of |N(v)| for v in R

and by mean pairwise spread

    S2(R) = (1 / (2 |R|)) * sum over ordered pairs (v, w) of d(v, w),

with disconnected pairs left out of the S2 sum (and logged).  The sampling
strategy of choice is a Metropolis-Hastings swap chain whose quality score
counts internally-vertex-disjoint shortest paths from the landmarks to a
set of core (tier) vertices.
"""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import AsGraphSnapshot, UnknownAsnError

log = logging.getLogger(__name__)

METHODS = (
    "random",
    "top_degree",
    "top_centrality",
    "top_triangles",
    "tier_mix",
    "random_walk",
    "random_walk_from_collector",
    "lazy_walk",
)


@dataclass(frozen=True)
class LandmarkSet:
    members: tuple[int, ...]
    method: str
    s1: float
    s2: float

    def to_json_obj(self, seed: int | None = None) -> dict:
        obj = {"method": self.method, "members": list(self.members),
               "s1": self.s1, "s2": self.s2}
        if seed is not None:
            obj["seed"] = seed
        return obj


def _require_members(snap: AsGraphSnapshot, members: Iterable[int]) -> list[int]:
    out = []
    for asn in members:
        if asn not in snap:
            raise UnknownAsnError(asn)
        out.append(asn)
    return out


def score_s1(snap: AsGraphSnapshot, members: Iterable[int]) -> float:
    """Neighborhood diversity of a landmark set, in (0, 1]."""
    members = _require_members(snap, members)
    if not members:
        raise ValueError("empty landmark set")
    union: set[int] = set()
    denom = 0
    for asn in members:
        nbrs = snap.neighbors(asn)
        union.update(nbrs)
        denom += len(nbrs)
    if denom == 0:
        raise ValueError("all landmarks are isolated; S1 undefined")
    return len(union) / denom


def score_s2(snap: AsGraphSnapshot, members: Iterable[int]) -> float:
    """Mean pairwise hop spread; disconnected pairs are excluded and logged."""
    members = _require_members(snap, members)
    if not members:
        raise ValueError("empty landmark set")
    total = 0
    excluded = 0
    for v in members:
        dist = snap.hop_distances(v, members)
        for w in members:
            if w == v:
                continue
            if w in dist:
                total += dist[w]
            else:
                excluded += 1
    if excluded:
        log.warning("S2: excluded %d disconnected ordered pairs", excluded)
    return total / (2 * len(members))


def default_tier_set(snap: AsGraphSnapshot, count: int | None = None,
                     landmark_count: int = 20) -> set[int]:
    """Degree-based stand-in for the network core on unlabeled graphs.

    Takes the top ceil(sqrt(L) * 5) vertices by degree (ties broken by
    ascending ASN); an explicit ASN list overrides this proxy wherever a
    tier set is accepted.
    """
    if count is None:
        count = math.ceil(math.sqrt(landmark_count) * 5)
    ranked = sorted(snap.asns(), key=lambda a: (-snap.degree(a), a))
    return set(ranked[:count])


def score_p(snap: AsGraphSnapshot, members: Sequence[int],
            tier_set: set[int]) -> int:
    """Greedy count of vertex-disjoint shortest paths from landmarks to the core.

    Landmarks are processed in ascending ASN order.  Each one claims a
    shortest path to its nearest tier vertex that avoids the interior
    vertices of previously accepted paths (endpoints stay free, so a path
    of length <= 1 consumes nothing).  A landmark inside the tier set
    counts as a zero-length success.  Exact maximum disjoint-path counting
    is intractable; this greedy order is the deterministic approximation
    used everywhere a quality score is needed.
    """
    if not tier_set:
        raise ValueError("tier set must be non-empty")
    consumed: set[int] = set()
    successes = 0
    for lm in sorted(members):
        if lm in tier_set:
            successes += 1
            continue
        if lm not in snap:
            raise UnknownAsnError(lm)
        path = _shortest_path_avoiding(snap, lm, tier_set, consumed)
        if path is not None:
            consumed.update(path[1:-1])
            successes += 1
    return successes


def _shortest_path_avoiding(snap: AsGraphSnapshot, src: int,
                            targets: set[int], blocked: set[int]) -> list[int] | None:
    """BFS shortest path from src to the nearest target, skipping blocked
    vertices as intermediates (src itself is always usable)."""
    parent: dict[int, int] = {src: src}
    queue = deque((src,))
    while queue:
        u = queue.popleft()
        for v in snap.neighbors(u):
            if v in parent:
                continue
            parent[v] = u
            if v in targets:
                path = [v]
                while path[-1] != src:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            if v in blocked:
                continue
            queue.append(v)
    return None


def _acceptance_ratio(p_new: float, p_old: float,
                      c_size: int, c_new_size: int) -> float:
    """Swap acceptance A = (P(S') / P(S)) * (|C| / |C'|)."""
    if p_old > 0:
        ratio = p_new / p_old
    elif p_new > 0:
        return math.inf
    else:
        ratio = 1.0
    return ratio * (c_size / c_new_size)


def mcmc_lazy_walk(snap: AsGraphSnapshot, initial: Sequence[int], iters: int,
                   seed: int, tier_set: set[int] | None = None) -> LandmarkSet:
    """Metropolis-Hastings landmark swap chain (the lazy random walk).

    Each step picks a member v uniformly, proposes a uniform w from
    C = (N(v) - S) + {v}, and accepts S' = S - {v} + {w} with probability
    min(1, (P(S')/P(S)) * (|C|/|C'|)) where C' = (N(w) - S) + {v}.  The
    best-scoring state visited is returned.  Proposing w = v is the lazy
    self-loop and leaves the state unchanged.
    """
    members = _require_members(snap, initial)
    if len(set(members)) != len(members):
        raise ValueError("initial landmark set has duplicates")
    if len(members) < 2:
        raise ValueError("need at least 2 landmarks")
    if tier_set is None:
        tier_set = default_tier_set(snap, landmark_count=len(members))
    rng = random.Random(seed)
    state = sorted(members)
    state_set = set(state)
    p_state = score_p(snap, state, tier_set)
    best = list(state)
    p_best = p_state

    for _ in range(iters):
        v = rng.choice(state)
        cand = sorted(set(snap.neighbors(v)) - state_set)
        cand.append(v)
        w = rng.choice(cand)
        cand_back = sorted(set(snap.neighbors(w)) - state_set)
        cand_back.append(v)  # v is in S, never in N(w) - S
        draw = rng.random()
        if w == v:
            continue  # lazy self-loop: A = 1, state unchanged
        proposal = sorted(state_set - {v} | {w})
        p_prop = score_p(snap, proposal, tier_set)
        ratio = _acceptance_ratio(p_prop, p_state, len(cand), len(cand_back))
        if draw < ratio:
            state = proposal
            state_set = set(state)
            p_state = p_prop
            if p_state > p_best:
                best = list(state)
                p_best = p_state
    return LandmarkSet(members=tuple(best), method="lazy_walk",
                       s1=score_s1(snap, best), s2=score_s2(snap, best))


def _approx_betweenness(snap: AsGraphSnapshot, sources: Sequence[int]) -> dict[int, float]:
    """Brandes dependency accumulation from a sampled source set."""
    score = {asn: 0.0 for asn in snap.asns()}
    for s in sources:
        stack: list[int] = []
        preds: dict[int, list[int]] = {s: []}
        sigma = {s: 1.0}
        dist = {s: 0}
        queue = deque((s,))
        while queue:
            u = queue.popleft()
            stack.append(u)
            for v in snap.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    sigma[v] = 0.0
                    preds[v] = []
                    queue.append(v)
                if dist[v] == dist[u] + 1:
                    sigma[v] += sigma[u]
                    preds[v].append(u)
        dep = {u: 0.0 for u in stack}
        while stack:
            w = stack.pop()
            for u in preds[w]:
                dep[u] += sigma[u] / sigma[w] * (1.0 + dep[w])
            if w != s:
                score[w] += dep[w]
    return score


def _triangle_counts(snap: AsGraphSnapshot) -> dict[int, int]:
    counts = {asn: 0 for asn in snap.asns()}
    nbr_sets = {asn: set(snap.neighbors(asn)) for asn in snap.asns()}
    for e in snap.edges():
        common = len(nbr_sets[e.a] & nbr_sets[e.b])
        counts[e.a] += common
        counts[e.b] += common
    return {asn: c // 2 for asn, c in counts.items()}


def _walk_collect(snap: AsGraphSnapshot, start: int, count: int,
                  rng: random.Random) -> list[int]:
    """Collect the first `count` distinct vertices of a simple random walk."""
    seen = [start]
    seen_set = {start}
    state = start
    budget = 200 * snap.vertex_count
    while len(seen) < count and budget > 0:
        budget -= 1
        nbrs = snap.neighbors(state)
        if not nbrs:
            break
        state = rng.choice(nbrs)
        if state not in seen_set:
            seen.append(state)
            seen_set.add(state)
    if len(seen) < count:  # walk trapped in a small component: fill randomly
        rest = [a for a in snap.asns() if a not in seen_set]
        seen.extend(rng.sample(rest, count - len(seen)))
    return seen[:count]


def select(snap: AsGraphSnapshot, method: str, count: int, seed: int = 0,
           iters: int = 35_000, *, tier_set: set[int] | None = None,
           collector: int | None = None) -> LandmarkSet:
    """Select `count` landmarks with the given strategy, deterministically.

    All randomized strategies draw from random.Random(seed); repeated calls
    with identical arguments return identical sets.
    """
    method = method.replace("-", "_")
    if method not in METHODS:
        raise ValueError(f"unknown landmark method {method!r}")
    if count < 2:
        raise ValueError("landmark count must be at least 2")
    if count > snap.vertex_count:
        raise ValueError(f"cannot select {count} landmarks from "
                         f"{snap.vertex_count} vertices")
    rng = random.Random(seed)
    asns = snap.asns()

    if method == "random":
        members = sorted(rng.sample(asns, count))
    elif method == "top_degree":
        members = sorted(sorted(asns, key=lambda a: (-snap.degree(a), a))[:count])
    elif method == "top_centrality":
        sources = rng.sample(asns, min(256, len(asns)))
        bc = _approx_betweenness(snap, sources)
        members = sorted(sorted(asns, key=lambda a: (-bc[a], a))[:count])
    elif method == "top_triangles":
        tri = _triangle_counts(snap)
        members = sorted(sorted(asns, key=lambda a: (-tri[a], a))[:count])
    elif method == "tier_mix":
        tier = tier_set if tier_set is not None else default_tier_set(
            snap, landmark_count=count)
        ranked = sorted(tier, key=lambda a: (-snap.degree(a), a))
        members = ranked[:count]
        if len(members) < count:  # small tier list: pad with next-best degree
            rest = sorted((a for a in asns if a not in tier),
                          key=lambda a: (-snap.degree(a), a))
            members.extend(rest[:count - len(members)])
        members = sorted(members)
    elif method == "random_walk":
        start = rng.choice(asns)
        members = sorted(_walk_collect(snap, start, count, rng))
    elif method == "random_walk_from_collector":
        if collector is None:
            collector = min(asns, key=lambda a: (-snap.degree(a), a))
        elif collector not in snap:
            raise UnknownAsnError(collector)
        members = sorted(_walk_collect(snap, collector, count, rng))
    else:  # lazy_walk
        initial = rng.sample(asns, count)
        result = mcmc_lazy_walk(snap, initial, iters=iters,
                                seed=rng.randrange(2**63), tier_set=tier_set)
        return result

    return LandmarkSet(members=tuple(members), method=method,
                       s1=score_s1(snap, members), s2=score_s2(snap, members))
