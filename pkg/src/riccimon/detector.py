"""Detection statistics over delta matrices and alarm-threshold calibration.

Each delta matrix collapses to a point on the (normalized energy, inverse
stable rank) plane:

* energy is the sum of squared defined entries divided by the row count m,
* the stable rank is that sum divided by the largest eigenvalue of the
  L x L Gram matrix, so its inverse is near 1 when a single landmark
  column carries the change and near 1/L when many do.

A point classifies as GLOBAL (energy above threshold, change spread over
many landmarks), LOCAL (energy above threshold but concentrated), or DRIFT
(everything else).  The positive/negative entry sums are reported as a
diagnostic balance series, never thresholded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .curvature import DeltaMatrix

GLOBAL = "GLOBAL"
LOCAL = "LOCAL"
DRIFT = "DRIFT"

DEFAULT_ENERGY_THRESHOLD = 1.0
DEFAULT_GAMMA_INV_THRESHOLD = 0.7

_DEGENERATE_ENERGY = 1e-12
_POWER_TOL = 1e-10
_POWER_MAX_ITER = 10_000


class CalibrationError(ValueError):
    """Calibration preconditions not met (too little or degenerate history)."""


@dataclass(frozen=True)
class DetectionPoint:
    """Per-snapshot detection statistics; `energy` is already normalized by m."""

    seq: int
    t: int
    energy: float
    gamma_inv: float
    sum_pos: float
    sum_neg: float
    m: int
    classification: str

    def to_json_obj(self) -> dict:
        return {
            "seq": self.seq,
            "t": self.t,
            "energy": self.energy,
            "gamma_inv": self.gamma_inv,
            "sum_pos": self.sum_pos,
            "sum_neg": self.sum_neg,
            "m": self.m,
            "class": self.classification,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DetectionPoint":
        return cls(seq=int(obj["seq"]), t=int(obj["t"]),
                   energy=float(obj["energy"]), gamma_inv=float(obj["gamma_inv"]),
                   sum_pos=float(obj["sum_pos"]), sum_neg=float(obj["sum_neg"]),
                   m=int(obj["m"]), classification=str(obj["class"]))


def frobenius_energy(delta: DeltaMatrix) -> float:
    """Sum of squared defined entries (the squared-norm convention).

    Callers divide by the row count m to obtain the normalized energy used
    for detection; masked entries are stored as zero and contribute nothing.
    """
    if delta.m < 1:
        raise ValueError("delta matrix has no rows")
    return float(np.sum(delta.values * delta.values))


def _power_iteration(gram: np.ndarray) -> float | None:
    """Largest eigenvalue of a symmetric PSD matrix; None on non-convergence."""
    n = gram.shape[0]
    x = np.full(n, 1.0 / math.sqrt(n))
    lam = 0.0
    for _ in range(_POWER_MAX_ITER):
        y = gram @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        lam = float(x @ (gram @ x))
        residual = float(np.linalg.norm(gram @ x - lam * x))
        if residual <= _POWER_TOL * max(1.0, lam):
            return lam
    return None


def stable_rank(delta: DeltaMatrix) -> tuple[float, bool]:
    """(gamma, degenerate) for a delta matrix.

    gamma = energy / lambda_max(D^T D) lies in [1, L].  Power iteration on
    the Gram matrix runs with a fixed unit start vector for determinism and
    falls back to a full symmetric eigensolve if it fails to converge.  A
    near-zero matrix is flagged degenerate with gamma reported as 1.
    """
    energy = frobenius_energy(delta)
    if energy < _DEGENERATE_ENERGY:
        return 1.0, True
    gram = delta.values.T @ delta.values
    lam = _power_iteration(gram)
    if lam is None:
        lam = float(np.linalg.eigvalsh(gram)[-1])
    gamma = energy / lam
    L = len(delta.col_landmarks)
    return float(min(max(gamma, 1.0), float(L))), False


def curvature_balance(delta: DeltaMatrix) -> tuple[float, float, float]:
    """(sum of positive entries, sum of negative entries, total)."""
    vals = delta.values
    pos = float(np.sum(vals[vals > 0]))
    neg = float(np.sum(vals[vals < 0]))
    return pos, neg, pos + neg


def classify(energy: float, gamma_inv: float,
             threshold: float = DEFAULT_ENERGY_THRESHOLD,
             gamma_inv_threshold: float = DEFAULT_GAMMA_INV_THRESHOLD) -> str:
    """Classify one (normalized energy, inverse stable rank) point."""
    if threshold <= 0:
        raise ValueError("energy threshold must be positive")
    if not 0.0 < gamma_inv_threshold < 1.0:
        raise ValueError("gamma_inv threshold must lie in (0, 1)")
    if energy > threshold:
        return GLOBAL if gamma_inv <= gamma_inv_threshold else LOCAL
    return DRIFT


def detection_point(delta: DeltaMatrix,
                    threshold: float = DEFAULT_ENERGY_THRESHOLD,
                    gamma_inv_threshold: float = DEFAULT_GAMMA_INV_THRESHOLD,
                    ) -> DetectionPoint:
    """Collapse a delta matrix into one classified detection point."""
    m = delta.m
    if m == 0:
        return DetectionPoint(seq=delta.seq, t=delta.t, energy=0.0,
                              gamma_inv=1.0, sum_pos=0.0, sum_neg=0.0,
                              m=0, classification=DRIFT)
    gamma, degenerate = stable_rank(delta)
    energy_bar = frobenius_energy(delta) / m
    pos, neg, _ = curvature_balance(delta)
    if degenerate:
        cls = DRIFT
    else:
        cls = classify(energy_bar, 1.0 / gamma, threshold, gamma_inv_threshold)
    return DetectionPoint(seq=delta.seq, t=delta.t, energy=energy_bar,
                          gamma_inv=1.0 / gamma, sum_pos=pos, sum_neg=neg,
                          m=m, classification=cls)


def chi2_sf(x: float) -> float:
    """Complementary CDF of the chi-squared distribution with 1 dof."""
    if x < 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


@dataclass(frozen=True)
class CalibrationReport:
    """Moment-fit of the energy series plus false-alarm arithmetic.

    The Gamma fit describes the normalized energy distribution; the
    false-alarm probability for threshold T uses the chi-squared tail of
    T divided by the pooled delta-entry variance.  Advisory output only:
    thresholds are never auto-applied.
    """

    gamma_shape: float
    gamma_scale: float
    energy_mean: float
    energy_variance: float
    entry_mean: float
    entry_variance: float
    points_used: int
    false_alarm: dict[float, float]

    def false_alarm_prob(self, threshold: float) -> float:
        return chi2_sf(threshold / self.entry_variance)

    def to_json_obj(self) -> dict:
        return {
            "gamma_shape": self.gamma_shape,
            "gamma_scale": self.gamma_scale,
            "energy_mean": self.energy_mean,
            "energy_variance": self.energy_variance,
            "entry_mean": self.entry_mean,
            "entry_variance": self.entry_variance,
            "points_used": self.points_used,
            "false_alarm": {repr(t): p for t, p in sorted(self.false_alarm.items())},
        }


def fit_gamma_moments(values: Sequence[float]) -> tuple[float, float]:
    """Method-of-moments Gamma fit: shape = mean^2/var, scale = var/mean."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    var = float(arr.var())
    if var <= 0.0 or mean <= 0.0:
        raise CalibrationError("energy history is degenerate (zero variance)")
    return mean * mean / var, var / mean


def calibrate(history: Iterable[DetectionPoint], n_landmarks: int,
              drift_only: bool = False,
              thresholds: Sequence[float] = (0.5, 1.0, 2.0),
              ) -> CalibrationReport:
    """Fit the energy distribution and report false-alarm probabilities.

    Requires at least 100 points (after the optional drift-only filter).
    Entry statistics are pooled from the per-point aggregates: each point
    contributes m * L entries with a known sum and sum of squares.
    """
    if n_landmarks < 1:
        raise CalibrationError("landmark count must be positive")
    points = [p for p in history
              if not drift_only or p.classification == DRIFT]
    if len(points) < 100:
        raise CalibrationError(
            f"need at least 100 points to calibrate, got {len(points)}")
    energies = [p.energy for p in points]
    shape, scale = fit_gamma_moments(energies)

    total_sq = 0.0
    total_sum = 0.0
    total_n = 0
    for p in points:
        if p.m == 0:
            continue
        total_sq += p.energy * p.m  # energy is sum-of-squares / m
        total_sum += p.sum_pos + p.sum_neg
        total_n += p.m * n_landmarks
    if total_n == 0:
        raise CalibrationError("history contains no matrix entries")
    entry_mean = total_sum / total_n
    entry_var = total_sq / total_n - entry_mean * entry_mean
    if entry_var <= 0.0:
        raise CalibrationError("pooled entry variance is zero")

    arr = np.asarray(energies, dtype=float)
    return CalibrationReport(
        gamma_shape=shape,
        gamma_scale=scale,
        energy_mean=float(arr.mean()),
        energy_variance=float(arr.var()),
        entry_mean=entry_mean,
        entry_variance=entry_var,
        points_used=len(points),
        false_alarm={float(t): chi2_sf(float(t) / entry_var)
                     for t in thresholds},
    )
