"""Transport-plan forensics: explain a detected event by diffing plans.

For the most affected AS rows of a delta matrix, the optimal transport
plans toward a landmark are recomputed on the snapshots before and after
the event boundary and subtracted.  Mass that used to flow through one
transit neighbor and now flows through another shows up as a matched
negative / positive block, which is the root-cause signal.  Only the exact
solver is used here: approximate plans make the difference too noisy to
interpret.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .curvature import DeltaMatrix, SnapshotDistances, mass_distribution
from .graph import AsGraphSnapshot
from .ot import exact_ot


class PlanDiffError(ValueError):
    """The requested pair cannot be diffed; the message names the snapshot."""


def top_movers(delta: DeltaMatrix, n: int) -> list[tuple[int, float]]:
    """Rows ranked by their squared curvature change, ties by ascending ASN."""
    if n < 1:
        raise ValueError("need n >= 1 movers")
    energies = np.sum(delta.values * delta.values, axis=1)
    ranked = sorted(zip(delta.row_asns, energies), key=lambda it: (-it[1], it[0]))
    return [(asn, float(e)) for asn, e in ranked[:n]]


def worst_landmark(delta: DeltaMatrix, asn: int) -> int:
    """The landmark whose curvature toward `asn` changed the most."""
    i = delta.row_asns.index(asn)
    row = np.abs(delta.values[i])
    j = int(np.argmax(row))
    return delta.col_landmarks[j]


@dataclass(frozen=True)
class PlanDiff:
    """Difference of two transport plans aligned on their support unions.

    Entries sum to ~0 (both plans move unit mass); `movers` ranks the row
    labels (neighbors of x) by absolute net mass shift.
    """

    x: int
    y: int
    row_labels: tuple[int, ...]
    col_labels: tuple[int, ...]
    diff: np.ndarray
    movers: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        self.diff.setflags(write=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row_asn", "col_asn", "mass_change"])
        for i, r in enumerate(self.row_labels):
            for j, c in enumerate(self.col_labels):
                writer.writerow([r, c, repr(float(self.diff[i, j]))])
        return buf.getvalue()


def _plan_on(snap: AsGraphSnapshot, x: int, y: int, alpha: float,
             label: str):
    for asn in (x, y):
        if asn not in snap:
            raise PlanDiffError(
                f"AS {asn} is absent from the {label} snapshot (seq {snap.seq})")
    oracle = SnapshotDistances(snap)
    if oracle.to_targets(x, (y,)).get(y) is None:
        raise PlanDiffError(
            f"AS {x} and landmark {y} are disconnected in the {label} "
            f"snapshot (seq {snap.seq})")
    mx = mass_distribution(snap, x, alpha)
    my = mass_distribution(snap, y, alpha)
    d = np.empty((len(mx), len(my)))
    for i, u in enumerate(mx.support):
        got = oracle.to_targets(u, my.support)
        for j, v in enumerate(my.support):
            d[i, j] = got[v]
    return exact_ot(mx, my, d)


def plan_diff(snap_before: AsGraphSnapshot, snap_after: AsGraphSnapshot,
              x: int, y: int, alpha: float = 0.5) -> PlanDiff:
    """Difference of the (x, y) transport plans across an event boundary.

    Plans are aligned on the union of their row and column supports with
    zero padding where a support vertex exists on only one side.  The same
    fixed (x, y) pair is used for both snapshots.
    """
    before = _plan_on(snap_before, x, y, alpha, "before")
    after = _plan_on(snap_after, x, y, alpha, "after")

    rows = tuple(sorted(set(before.rows) | set(after.rows)))
    cols = tuple(sorted(set(before.cols) | set(after.cols)))
    row_pos = {asn: i for i, asn in enumerate(rows)}
    col_pos = {asn: j for j, asn in enumerate(cols)}

    def embed(plan) -> np.ndarray:
        out = np.zeros((len(rows), len(cols)))
        ri = [row_pos[a] for a in plan.rows]
        cj = [col_pos[a] for a in plan.cols]
        out[np.ix_(ri, cj)] = plan.plan
        return out

    diff = embed(after) - embed(before)
    shifts = diff.sum(axis=1)
    movers = tuple(sorted(zip(rows, (float(s) for s in shifts)),
                          key=lambda it: (-abs(it[1]), it[0])))
    return PlanDiff(x=x, y=y, row_labels=rows, col_labels=cols,
                    diff=diff, movers=movers)
