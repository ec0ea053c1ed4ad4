"""Vertex-pair curvature and per-snapshot curvature / delta matrices.

The curvature between x and y is one minus the ratio of the optimal
transport cost between their neighborhood mass distributions to the hop
distance d(x, y).  Masses put a configurable share alpha on the vertex
itself and split the rest over neighbors proportionally to edge address
counts (uniformly when all counts are zero).

With alpha = 0.5 every defined value lies in [-1, 1]; with alpha = 0 the
general bound [-2, 1] applies.  Pairs in different components have no
defined curvature: matrix cells store 0 with their mask entry cleared.
"""

from __future__ import annotations

import csv
import io
import json
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import AsGraphSnapshot, UnknownAsnError
from .ot import MassDistribution, TransportPlan, exact_ot, sinkhorn_ot

EXACT = "exact"
APPROX = "approx"

_BOUND_SLACK = 1e-9
DEFAULT_SINKHORN_EPSILON = 0.01


class CurvatureRangeError(RuntimeError):
    """A computed curvature violated its theoretical bound."""


@dataclass
class BuildStats:
    """Accumulated timing breakdown for matrix builds (seconds)."""

    bfs_seconds: float = 0.0
    ot_seconds: float = 0.0
    cells: int = 0

    def merge(self, other: "BuildStats") -> None:
        self.bfs_seconds += other.bfs_seconds
        self.ot_seconds += other.ot_seconds
        self.cells += other.cells


class SnapshotDistances:
    """Resumable truncated-BFS hop distances over one snapshot.

    One BFS state is kept per source vertex; a query expands the frontier
    only until all requested targets are reached (or the component is
    exhausted), and later queries resume where the search stopped.  States
    are evicted LRU beyond `max_sources`.
    """

    def __init__(self, snap: AsGraphSnapshot, max_sources: int = 100_000,
                 stats: BuildStats | None = None) -> None:
        self._snap = snap
        self._adj = snap._adj  # internal read-only sharing with the snapshot
        self._max_sources = max_sources
        self._states: OrderedDict[int, tuple[dict[int, int], list[int], int]] = OrderedDict()
        self.stats = stats

    def _state(self, src: int) -> tuple[dict[int, int], list[int], int]:
        state = self._states.get(src)
        if state is not None:
            self._states.move_to_end(src)
            return state
        if src not in self._adj:
            raise UnknownAsnError(src)
        state = ({src: 0}, [src], 0)
        self._states[src] = state
        while len(self._states) > self._max_sources:
            self._states.popitem(last=False)
        return state

    def to_targets(self, src: int, targets: Iterable[int]) -> dict[int, int]:
        """Distances from src to each reachable target (absent if unreachable)."""
        t0 = time.perf_counter() if self.stats else 0.0
        dist, frontier, level = self._state(src)
        remaining = {t for t in targets if t not in dist}
        adj = self._adj
        while remaining and frontier:
            level += 1
            nxt: list[int] = []
            for u in frontier:
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = level
                        nxt.append(v)
            remaining.difference_update(nxt)
            frontier = nxt
        self._states[src] = (dist, frontier, level)
        if self.stats:
            self.stats.bfs_seconds += time.perf_counter() - t0
        return {t: dist[t] for t in targets if t in dist}


def mass_distribution(snap: AsGraphSnapshot, x: int, alpha: float = 0.5) -> MassDistribution:
    """Neighborhood mass of vertex x: alpha at x, count-proportional to neighbors.

    Falls back to a uniform neighbor split when every incident count is
    zero; an isolated vertex carries a point mass at itself.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if x not in snap:
        raise UnknownAsnError(x)
    nbrs = snap.neighbors(x)
    if not nbrs or alpha == 1.0:
        return MassDistribution((x,), (1.0,))
    counts = [snap.edge_count_between(x, n) for n in nbrs]
    total = sum(counts)
    if total > 0:
        weights = [c / total for c in counts]
    else:
        weights = [1.0 / len(nbrs)] * len(nbrs)
    if alpha == 0.0:
        return MassDistribution(tuple(nbrs), tuple(weights))
    support = (x,) + tuple(nbrs)
    mass = (alpha,) + tuple((1.0 - alpha) * w for w in weights)
    return MassDistribution(support, mass)


def _support_distances(oracle: SnapshotDistances, mx: MassDistribution,
                       my: MassDistribution) -> np.ndarray:
    targets = my.support
    d = np.empty((len(mx), len(my)))
    for i, u in enumerate(mx.support):
        got = oracle.to_targets(u, targets)
        for j, v in enumerate(targets):
            d[i, j] = got[v]
    return d


def _solve(mx: MassDistribution, my: MassDistribution, d: np.ndarray,
           solver: str, epsilon: float) -> TransportPlan:
    if solver == EXACT:
        return exact_ot(mx, my, d)
    if solver == APPROX:
        return sinkhorn_ot(mx, my, d, epsilon=epsilon)
    raise ValueError(f"unknown solver {solver!r}")


def ricci_curvature(snap: AsGraphSnapshot, x: int, y: int, alpha: float = 0.5,
                    solver: str = EXACT, *,
                    oracle: SnapshotDistances | None = None,
                    epsilon: float = DEFAULT_SINKHORN_EPSILON,
                    stats: BuildStats | None = None) -> float | None:
    """Curvature of the vertex pair (x, y), or None when they are disconnected.

    Support-pair distances come from truncated BFS runs out of each source
    support vertex (x and y being connected guarantees every pair resolves).
    """
    if x == y:
        raise ValueError("curvature requires two distinct vertices")
    if oracle is None:
        oracle = SnapshotDistances(snap, stats=stats)
    dxy = oracle.to_targets(x, (y,)).get(y)
    if dxy is None:
        return None
    mx = mass_distribution(snap, x, alpha)
    my = mass_distribution(snap, y, alpha)
    d = _support_distances(oracle, mx, my)
    t0 = time.perf_counter() if stats else 0.0
    plan = _solve(mx, my, d, solver, epsilon)
    if stats:
        stats.ot_seconds += time.perf_counter() - t0
        stats.cells += 1
    return 1.0 - plan.cost / dxy


def curvature_bounds(alpha: float) -> tuple[float, float]:
    return (-1.0, 1.0) if alpha == 0.5 else (-2.0, 1.0)


@dataclass(frozen=True)
class CurvatureMatrix:
    """m x L curvatures from changed ASes (rows) to landmarks (columns)."""

    seq: int
    t: int
    row_asns: tuple[int, ...]
    col_landmarks: tuple[int, ...]
    values: np.ndarray
    defined_mask: np.ndarray

    def __post_init__(self) -> None:
        self.values.setflags(write=False)
        self.defined_mask.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.row_asns)

    def to_json_obj(self) -> dict:
        return {
            "seq": self.seq,
            "t": self.t,
            "rows": list(self.row_asns),
            "landmarks": list(self.col_landmarks),
            "values": [[float(v) for v in row] for row in self.values],
            "defined": [[bool(v) for v in row] for row in self.defined_mask],
        }


@dataclass(frozen=True)
class DeltaMatrix:
    """Per-snapshot curvature change: values of C_k - C_{k-1} over shared rows."""

    seq: int
    t: int
    row_asns: tuple[int, ...]
    col_landmarks: tuple[int, ...]
    values: np.ndarray
    defined_mask: np.ndarray

    def __post_init__(self) -> None:
        self.values.setflags(write=False)
        self.defined_mask.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.row_asns)

    def to_json_obj(self) -> dict:
        return {
            "seq": self.seq,
            "t": self.t,
            "rows": list(self.row_asns),
            "landmarks": list(self.col_landmarks),
            "values": [[float(v) for v in row] for row in self.values],
            "defined": [[bool(v) for v in row] for row in self.defined_mask],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DeltaMatrix":
        return cls(
            seq=int(obj["seq"]),
            t=int(obj["t"]),
            row_asns=tuple(int(a) for a in obj["rows"]),
            col_landmarks=tuple(int(a) for a in obj["landmarks"]),
            values=np.asarray(obj["values"], dtype=float).reshape(
                len(obj["rows"]), len(obj["landmarks"])),
            defined_mask=np.asarray(obj["defined"], dtype=bool).reshape(
                len(obj["rows"]), len(obj["landmarks"])),
        )


def matrix_to_json(matrix: CurvatureMatrix | DeltaMatrix) -> str:
    return json.dumps(matrix.to_json_obj(), separators=(",", ":"))


def delta_from_json(data: str | bytes) -> DeltaMatrix:
    return DeltaMatrix.from_json_obj(json.loads(data))


def matrix_to_csv(matrix: CurvatureMatrix | DeltaMatrix) -> str:
    """Long-form CSV (row_asn, landmark_asn, kappa, defined), heatmap-ready."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row_asn", "landmark_asn", "kappa", "defined"])
    for i, asn in enumerate(matrix.row_asns):
        for j, lm in enumerate(matrix.col_landmarks):
            writer.writerow([asn, lm, repr(float(matrix.values[i, j])),
                             int(matrix.defined_mask[i, j])])
    return buf.getvalue()


def _check_bounds(values: np.ndarray, mask: np.ndarray, alpha: float) -> None:
    if not mask.any():
        return
    lo, hi = curvature_bounds(alpha)
    defined = values[mask]
    bad = (defined < lo - _BOUND_SLACK) | (defined > hi + _BOUND_SLACK)
    if bad.any():
        raise CurvatureRangeError(
            f"curvature outside [{lo}, {hi}] with alpha={alpha}: "
            f"{defined[bad][:5].tolist()}")


def build_curvature_rows(snap: AsGraphSnapshot, rows: Sequence[int],
                         landmarks: Sequence[int], alpha: float = 0.5,
                         solver: str = EXACT, *,
                         epsilon: float = DEFAULT_SINKHORN_EPSILON,
                         missing_rows: str = "error",
                         strict_landmarks: bool = True,
                         workers: int = 1,
                         oracle: SnapshotDistances | None = None,
                         stats: BuildStats | None = None) -> CurvatureMatrix:
    """Curvature matrix for the given rows and landmark columns.

    A row equal to a landmark is stored as 0 with its mask cleared, as is
    any disconnected (row, landmark) pair.  `missing_rows="zero"` makes
    absent row ASes contribute a defined 0 row (used for the previous
    snapshot in delta computation, where new ASes have no prior curvature);
    the default raises.  With `strict_landmarks=False` absent landmarks
    yield a fully undefined column instead of an error.
    """
    landmarks = tuple(landmarks)
    if len(set(landmarks)) != len(landmarks):
        raise ValueError("landmarks must be distinct")
    for lm in landmarks:
        if lm not in snap and strict_landmarks:
            raise UnknownAsnError(lm)
    if missing_rows not in ("error", "zero"):
        raise ValueError("missing_rows must be 'error' or 'zero'")
    rows = tuple(rows)
    m, L = len(rows), len(landmarks)
    values = np.zeros((m, L))
    mask = np.zeros((m, L), dtype=bool)

    if workers > 1 and m > 1:
        row_results = _parallel_rows(snap, rows, landmarks, alpha, solver,
                                     epsilon, missing_rows, workers)
        for i, (row_vals, row_mask) in enumerate(row_results):
            values[i] = row_vals
            mask[i] = row_mask
    else:
        if oracle is None:
            oracle = SnapshotDistances(snap, stats=stats)
        for i, asn in enumerate(rows):
            values[i], mask[i] = _compute_row(snap, asn, landmarks, alpha,
                                              solver, epsilon, missing_rows,
                                              oracle, stats)
    _check_bounds(values, mask, alpha)
    return CurvatureMatrix(seq=snap.seq, t=snap.t, row_asns=rows,
                           col_landmarks=landmarks, values=values,
                           defined_mask=mask)


def _compute_row(snap: AsGraphSnapshot, asn: int, landmarks: tuple[int, ...],
                 alpha: float, solver: str, epsilon: float, missing_rows: str,
                 oracle: SnapshotDistances, stats: BuildStats | None,
                 ) -> tuple[np.ndarray, np.ndarray]:
    L = len(landmarks)
    vals = np.zeros(L)
    mask = np.zeros(L, dtype=bool)
    if asn not in snap:
        if missing_rows == "error":
            raise UnknownAsnError(asn)
        mask[:] = True  # absent AS: defined zero row (no prior curvature)
        for j, lm in enumerate(landmarks):
            if lm == asn:
                mask[j] = False
        return vals, mask
    for j, lm in enumerate(landmarks):
        if lm == asn or lm not in snap:
            continue
        kappa = ricci_curvature(snap, asn, lm, alpha, solver,
                                oracle=oracle, epsilon=epsilon, stats=stats)
        if kappa is not None:
            vals[j] = kappa
            mask[j] = True
    return vals, mask


# -- optional process-parallel row computation -------------------------------

_WORKER_CTX: dict = {}


def _init_worker(snap, landmarks, alpha, solver, epsilon, missing_rows):
    _WORKER_CTX["snap"] = snap
    _WORKER_CTX["landmarks"] = landmarks
    _WORKER_CTX["alpha"] = alpha
    _WORKER_CTX["solver"] = solver
    _WORKER_CTX["epsilon"] = epsilon
    _WORKER_CTX["missing_rows"] = missing_rows
    _WORKER_CTX["oracle"] = SnapshotDistances(_WORKER_CTX["snap"])


def _worker_row(asn: int) -> tuple[np.ndarray, np.ndarray]:
    ctx = _WORKER_CTX
    return _compute_row(ctx["snap"], asn, ctx["landmarks"], ctx["alpha"],
                        ctx["solver"], ctx["epsilon"], ctx["missing_rows"],
                        ctx["oracle"], None)


def _parallel_rows(snap, rows, landmarks, alpha, solver, epsilon,
                   missing_rows, workers):
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    with ctx.Pool(processes=workers, initializer=_init_worker,
                  initargs=(snap, landmarks, alpha, solver, epsilon,
                            missing_rows)) as pool:
        return pool.map(_worker_row, rows)


def delta(snap_k: AsGraphSnapshot, snap_km1: AsGraphSnapshot,
          landmarks: Sequence[int], alpha: float = 0.5, solver: str = EXACT, *,
          epsilon: float = DEFAULT_SINKHORN_EPSILON, workers: int = 1,
          stats: BuildStats | None = None) -> DeltaMatrix:
    """Curvature change matrix between two consecutive snapshots.

    Rows are the ASes whose ctime falls at or after the previous snapshot
    time; both matrices are evaluated over this same row set.  Rows absent
    from the previous snapshot take prior curvature 0, and a cell is
    defined only where both sides are.
    """
    if snap_km1.seq + 1 != snap_k.seq:
        raise ValueError(f"snapshots are not consecutive "
                         f"(seq {snap_km1.seq} then {snap_k.seq})")
    rows = snap_k.changed_since(snap_km1.t)
    c_k = build_curvature_rows(snap_k, rows, landmarks, alpha, solver,
                               epsilon=epsilon, workers=workers, stats=stats)
    c_km1 = build_curvature_rows(snap_km1, rows, landmarks, alpha, solver,
                                 epsilon=epsilon, missing_rows="zero",
                                 strict_landmarks=False, workers=workers,
                                 stats=stats)
    mask = c_k.defined_mask & c_km1.defined_mask
    values = np.where(mask, c_k.values - c_km1.values, 0.0)
    return DeltaMatrix(seq=snap_k.seq, t=snap_k.t, row_asns=tuple(rows),
                       col_landmarks=tuple(landmarks), values=values,
                       defined_mask=mask)
