"""End-to-end monitoring pipeline: feed -> snapshots -> deltas -> detections.

The pipeline holds at most two snapshots at a time, so resident memory
scales with graph size rather than feed length.  Detection points stream
out as JSON lines together with a phase-diagram CSV, and every GLOBAL
classification triggers an explain bundle (top movers plus transport-plan
diffs against each mover's worst landmark).
"""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from . import curvature, detector, rootcause
from .feed import FeedRecord, run_ingest
from .graph import AsGraphSnapshot

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

log = logging.getLogger(__name__)

ENV_THREADS = "RICCI_MON_THREADS"


class ConfigError(ValueError):
    """Invalid or inconsistent monitoring configuration."""


@dataclass(frozen=True)
class MonitorConfig:
    """Resolved monitoring run configuration.

    Every run writes its resolved configuration next to the outputs so the
    artifacts are reproducible from the written files alone.
    """

    interval: int = 60
    landmarks_path: str | None = None
    alpha: float = 0.5
    solver: str = curvature.EXACT
    threshold: float = detector.DEFAULT_ENERGY_THRESHOLD
    gamma_inv_threshold: float = detector.DEFAULT_GAMMA_INV_THRESHOLD
    out_dir: str = "."
    workers: int = 1
    explain_top: int = 3

    def validated(self) -> "MonitorConfig":
        if self.interval <= 0:
            raise ConfigError("interval must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.solver not in (curvature.EXACT, curvature.APPROX):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.threshold <= 0:
            raise ConfigError("energy threshold must be positive")
        if not 0.0 < self.gamma_inv_threshold < 1.0:
            raise ConfigError("gamma threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        cap = os.environ.get(ENV_THREADS)
        if cap is not None:
            try:
                cap_val = int(cap)
            except ValueError as exc:
                raise ConfigError(f"{ENV_THREADS} must be an integer") from exc
            if cap_val >= 1 and self.workers > cap_val:
                return replace(self, workers=cap_val)
        return self

    def to_json_obj(self) -> dict:
        return {
            "interval": self.interval,
            "landmarks_path": self.landmarks_path,
            "alpha": self.alpha,
            "solver": self.solver,
            "threshold": self.threshold,
            "gamma_inv_threshold": self.gamma_inv_threshold,
            "out_dir": self.out_dir,
            "workers": self.workers,
            "explain_top": self.explain_top,
        }


def config_from_toml(text: str | bytes, base: MonitorConfig | None = None) -> MonitorConfig:
    """Overlay TOML keys (same names as the config fields) onto a base config."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config TOML: {exc}") from exc
    base = base or MonitorConfig()
    known = set(MonitorConfig.__dataclass_fields__)
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return replace(base, **obj)


def load_landmarks(path: str | os.PathLike) -> list[int]:
    """Read a landmark JSON file ({"members": [asn, ...]}, as written by select)."""
    with open(path, "rb") as fh:
        obj = json.load(fh)
    members = obj.get("members") if isinstance(obj, dict) else obj
    if (not isinstance(members, list) or not members
            or not all(isinstance(a, int) and a > 0 for a in members)):
        raise ConfigError(f"{path}: expected a non-empty ASN list under 'members'")
    return list(members)


@dataclass
class PipelineResult:
    points: list[detector.DetectionPoint] = field(default_factory=list)
    snapshots_seen: int = 0
    explained: list[tuple[int, int, int]] = field(default_factory=list)  # (seq, asn, landmark)
    points_path: Path | None = None
    phase_path: Path | None = None


def run_pipeline(config: MonitorConfig, records: Iterable[FeedRecord],
                 landmarks: list[int] | None = None, *,
                 on_point: Callable[[detector.DetectionPoint], None] | None = None,
                 ) -> PipelineResult:
    """Drive the full monitoring loop over a record stream.

    Landmarks come from the explicit argument or from the configured file.
    Outputs land in config.out_dir: detections.jsonl, phase.csv, the
    resolved config, and explain bundles for GLOBAL points.  Detections do
    not affect the exit path; only I/O and configuration problems raise.
    """
    config = config.validated()
    if landmarks is None:
        if config.landmarks_path is None:
            raise ConfigError("no landmarks given (argument or landmarks_path)")
        landmarks = load_landmarks(config.landmarks_path)
    if len(landmarks) < 2:
        raise ConfigError("need at least 2 landmarks")

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(config.to_json_obj(), indent=2) + "\n")

    result = PipelineResult()
    result.points_path = out_dir / "detections.jsonl"
    result.phase_path = out_dir / "phase.csv"
    prev: AsGraphSnapshot | None = None
    checked_landmarks = False

    with open(result.points_path, "w") as points_fh, \
            open(result.phase_path, "w") as phase_fh:
        phase_fh.write("energy,gamma_inv,class\n")
        for snap in run_ingest(records, interval=config.interval):
            result.snapshots_seen += 1
            if not checked_landmarks:
                missing = [lm for lm in landmarks if lm not in snap]
                if missing:
                    log.warning("landmarks absent from first snapshot: %s", missing)
                checked_landmarks = True
            if prev is not None:
                point = _process_pair(config, prev, snap, landmarks,
                                      points_fh, phase_fh, out_dir, result)
                if on_point is not None:
                    on_point(point)
            prev = snap
    log.info("pipeline done: %d snapshots, %d detection points",
             result.snapshots_seen, len(result.points))
    return result


def _process_pair(config, prev, snap, landmarks, points_fh, phase_fh,
                  out_dir, result):
    stats = curvature.BuildStats()
    t0 = time.perf_counter()
    dm = curvature.delta(snap, prev, landmarks, alpha=config.alpha,
                         solver=config.solver, workers=config.workers,
                         stats=stats)
    t1 = time.perf_counter()
    point = detector.detection_point(dm, config.threshold,
                                     config.gamma_inv_threshold)
    t2 = time.perf_counter()
    log.info("seq=%d m=%d class=%s energy=%.4f gamma_inv=%.3f "
             "delta=%.2fs (bfs=%.2fs ot=%.2fs cells=%d) detect=%.3fs",
             point.seq, point.m, point.classification, point.energy,
             point.gamma_inv, t1 - t0, stats.bfs_seconds, stats.ot_seconds,
             stats.cells, t2 - t1)
    result.points.append(point)
    points_fh.write(point.to_json_line() + "\n")
    phase_fh.write(f"{point.energy!r},{point.gamma_inv!r},{point.classification}\n")
    if point.classification == detector.GLOBAL and config.explain_top > 0:
        _write_explain_bundle(config, prev, snap, dm, out_dir, result)
    return point


def _write_explain_bundle(config, prev, snap, dm, out_dir, result):
    bundle_dir = out_dir / f"explain_seq{dm.seq:06d}"
    bundle_dir.mkdir(exist_ok=True)
    (bundle_dir / "delta.json").write_text(curvature.matrix_to_json(dm) + "\n")
    movers = rootcause.top_movers(dm, config.explain_top)
    summary = []
    for asn, row_energy in movers:
        lm = rootcause.worst_landmark(dm, asn)
        entry = {"asn": asn, "row_energy": row_energy, "landmark": lm}
        try:
            diff = rootcause.plan_diff(prev, snap, asn, lm, alpha=config.alpha)
        except rootcause.PlanDiffError as exc:
            entry["error"] = str(exc)
            log.warning("explain seq=%d asn=%d: %s", dm.seq, asn, exc)
        else:
            path = bundle_dir / f"plan_diff_{asn}_{lm}.csv"
            path.write_text(diff.to_csv())
            entry["movers"] = [[a, s] for a, s in diff.movers[:10]]
            entry["csv"] = path.name
            result.explained.append((dm.seq, asn, lm))
        summary.append(entry)
    (bundle_dir / "movers.json").write_text(json.dumps(summary, indent=2) + "\n")
