"""Optimal transport between finite distributions over graph vertices.

Two solvers share one result type:

* :func:`exact_ot` solves the transportation linear program with a dense
  network-simplex (north-west-corner start, Bland entering/leaving rule, so
  the optimal basis is reached deterministically and without cycling).
* :func:`sinkhorn_ot` computes an entropically regularized plan with
  log-domain scaling iterations, converging to the exact plan as the
  regularization strength goes to zero.

Both are pure functions of their inputs and safe to call from any number of
workers concurrently.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MARGINAL_TOL = 1e-9
_REDUCED_COST_TOL = 1e-12


class OtError(ValueError):
    """Invalid solver input (non-finite distances, infeasible marginals)."""


@dataclass(frozen=True)
class MassDistribution:
    """Finite probability distribution over a vertex support set.

    Masses are non-negative, support entries are distinct, and the total
    mass is 1 within 1e-12.
    """

    support: tuple[int, ...]
    mass: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.support) != len(self.mass):
            raise ValueError("support and mass lengths differ")
        if not self.support:
            raise ValueError("empty distribution")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support entries must be distinct")
        if any(m < 0 for m in self.mass):
            raise ValueError("masses must be non-negative")
        total = math.fsum(self.mass)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses must sum to 1, got {total!r}")

    def __len__(self) -> int:
        return len(self.support)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.mass, dtype=float)


@dataclass(frozen=True)
class TransportPlan:
    """A transport plan with its cost and solver diagnostics.

    Row sums match the source masses and column sums the target masses
    (exactly for the simplex, within `marginal_error` for Sinkhorn), and
    cost equals the entrywise plan * distance sum.
    """

    rows: tuple[int, ...]
    cols: tuple[int, ...]
    plan: np.ndarray
    cost: float
    converged: bool = True
    iterations: int = 0
    marginal_error: float = 0.0

    def __post_init__(self) -> None:
        self.plan.setflags(write=False)


def _validate_inputs(mu: MassDistribution, nu: MassDistribution,
                     d) -> np.ndarray:
    dm = np.asarray(d, dtype=float)
    if dm.shape != (len(mu), len(nu)):
        raise OtError(f"distance matrix shape {dm.shape} does not match "
                      f"supports ({len(mu)}, {len(nu)})")
    if not np.all(np.isfinite(dm)):
        raise OtError("distance matrix contains non-finite entries; "
                      "resolve disconnected supports before solving")
    if np.any(dm < 0):
        raise OtError("distance matrix contains negative entries")
    if abs(math.fsum(mu.mass) - math.fsum(nu.mass)) > MARGINAL_TOL:
        raise OtError("marginals are infeasible: total masses differ")
    return dm


def _north_west_corner(a: np.ndarray, b: np.ndarray) -> dict[tuple[int, int], float]:
    """Initial basic feasible solution with exactly m + n - 1 basis cells."""
    m, n = len(a), len(b)
    a = a.copy()
    b = b.copy()
    flows: dict[tuple[int, int], float] = {}
    i = j = 0
    while True:
        x = min(a[i], b[j])
        flows[(i, j)] = float(x)
        a[i] -= x
        b[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if a[i] <= 0.0 and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return flows


def _compute_duals(d: np.ndarray, adj: dict[int, list[int]],
                   m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Node potentials over the basis tree; rows are 0..m-1, cols m..m+n-1."""
    u = np.empty(m)
    v = np.empty(n)
    seen = [False] * (m + n)
    u[0] = 0.0
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nxt in adj[node]:
            if seen[nxt]:
                continue
            seen[nxt] = True
            if node < m:  # row -> col
                v[nxt - m] = d[node, nxt - m] - u[node]
            else:  # col -> row
                u[nxt] = d[nxt, node - m] - v[node - m]
            stack.append(nxt)
    return u, v


def _tree_path(adj: dict[int, list[int]], start: int, goal: int) -> list[int]:
    """Unique node path between two nodes of the basis spanning tree."""
    parent = {start: -1}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt in adj[node]:
            if nxt not in parent:
                parent[nxt] = node
                stack.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def exact_ot(mu: MassDistribution, nu: MassDistribution,
             d: Sequence[Sequence[float]] | np.ndarray) -> TransportPlan:
    """Exact optimal transport plan via the transportation simplex.

    Parameters
    ----------
    mu, nu : MassDistribution
        Source and target distributions.
    d : array-like of shape (len(mu), len(nu))
        Non-negative, finite costs between support elements.

    Returns
    -------
    TransportPlan
        Optimal plan; deterministic for fixed inputs (Bland pivoting picks
        the lexicographically first entering and leaving cells).
    """
    dm = _validate_inputs(mu, nu, d)
    a = mu.as_array()
    b = nu.as_array()
    m, n = len(a), len(b)

    flows = _north_west_corner(a, b)
    adj: dict[int, list[int]] = {k: [] for k in range(m + n)}
    for (i, j) in flows:
        adj[i].append(m + j)
        adj[m + j].append(i)

    basis_mask = np.zeros((m, n), dtype=bool)
    for (i, j) in flows:
        basis_mask[i, j] = True

    pivots = 0
    max_pivots = max(10_000, 200 * (m + n))
    while True:
        u, v = _compute_duals(dm, adj, m, n)
        reduced = dm - u[:, None] - v[None, :]
        reduced[basis_mask] = 0.0
        negative = np.flatnonzero(reduced.ravel() < -_REDUCED_COST_TOL)
        if negative.size == 0:
            break
        if pivots >= max_pivots:
            raise RuntimeError("transportation simplex failed to terminate")
        pivots += 1
        ei, ej = divmod(int(negative[0]), n)

        # Cycle = entering cell + the tree path from row ei to col ej.
        nodes = _tree_path(adj, ei, m + ej)
        cells = []
        for p, q in zip(nodes, nodes[1:]):
            cells.append((p, q - m) if p < m else (q, p - m))
        minus = cells[0::2]
        plus = cells[1::2]

        theta = min(flows[c] for c in minus)
        leaving = min(c for c in minus if flows[c] <= theta)

        for c in minus:
            flows[c] -= theta
        for c in plus:
            flows[c] += theta
        flows[(ei, ej)] = theta

        del flows[leaving]
        basis_mask[leaving] = False
        basis_mask[ei, ej] = True
        li, lj = leaving
        adj[li].remove(m + lj)
        adj[m + lj].remove(li)
        adj[ei].append(m + ej)
        adj[m + ej].append(ei)

    plan = np.zeros((m, n))
    for (i, j), x in flows.items():
        plan[i, j] = x if x > 0 else 0.0
    cost = float(np.sum(plan * dm))
    marginal_error = max(
        float(np.max(np.abs(plan.sum(axis=1) - a))),
        float(np.max(np.abs(plan.sum(axis=0) - b))),
    )
    return TransportPlan(rows=mu.support, cols=nu.support, plan=plan,
                         cost=cost, converged=True, iterations=pivots,
                         marginal_error=marginal_error)


def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(mat, axis=axis, keepdims=True)
    mx_safe = np.where(np.isfinite(mx), mx, 0.0)
    out = mx_safe + np.log(np.sum(np.exp(mat - mx_safe), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def sinkhorn_ot(mu: MassDistribution, nu: MassDistribution,
                d: Sequence[Sequence[float]] | np.ndarray,
                epsilon: float, max_iter: int = 10_000,
                tol: float = 1e-9) -> TransportPlan:
    """Entropically regularized transport via log-domain Sinkhorn scaling.

    Iterates until the worst marginal violation is below `tol` or
    `max_iter` sweeps have run; the outcome is recorded on the returned
    plan (`converged`, `iterations`, `marginal_error`) and a warning is
    logged on non-convergence.  The plan cost approaches the exact
    transport cost from above as epsilon decreases.
    """
    if epsilon <= 0:
        raise OtError("epsilon must be positive")
    dm = _validate_inputs(mu, nu, d)
    a_full = mu.as_array()
    b_full = nu.as_array()
    ai = np.flatnonzero(a_full > 0)
    bj = np.flatnonzero(b_full > 0)
    a = a_full[ai]
    b = b_full[bj]
    c = dm[np.ix_(ai, bj)]

    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    converged = False
    iterations = 0
    err = math.inf
    for iterations in range(1, max_iter + 1):
        f = epsilon * (log_a - _logsumexp((g[None, :] - c) / epsilon, axis=1))
        g = epsilon * (log_b - _logsumexp((f[:, None] - c) / epsilon, axis=0))
        sub_plan = np.exp((f[:, None] + g[None, :] - c) / epsilon)
        err = max(
            float(np.max(np.abs(sub_plan.sum(axis=1) - a))),
            float(np.max(np.abs(sub_plan.sum(axis=0) - b))),
        )
        if err <= tol:
            converged = True
            break
    if not converged:
        log.warning("sinkhorn did not converge in %d iterations "
                    "(marginal violation %.3e > tol %.3e)", max_iter, err, tol)

    plan = np.zeros_like(dm)
    plan[np.ix_(ai, bj)] = sub_plan
    cost = float(np.sum(plan * dm))
    return TransportPlan(rows=mu.support, cols=nu.support, plan=plan,
                         cost=cost, converged=converged, iterations=iterations,
                         marginal_error=err)
