"""Command line front end: ingest, landmarks, monitor, explain, simulate, calibrate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import curvature, detector, landmarks as lm_mod, pipeline, rootcause, synth
from .feed import read_feed, run_ingest
from .graph import export_snapshot, import_snapshot

log = logging.getLogger("riccimon")


def _open_feed(path: str):
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8")


def _load_snapshot(path: str):
    with open(path, "rb") as fh:
        return import_snapshot(fh.read())


def _base_config(args) -> pipeline.MonitorConfig:
    cfg = pipeline.MonitorConfig()
    if getattr(args, "config", None):
        cfg = pipeline.config_from_toml(Path(args.config).read_text(), cfg)
    overrides = {}
    for dest, field in (("interval", "interval"), ("landmarks", "landmarks_path"),
                        ("alpha", "alpha"), ("ot", "solver"),
                        ("threshold", "threshold"),
                        ("gamma_threshold", "gamma_inv_threshold"),
                        ("out", "out_dir"), ("workers", "workers")):
        value = getattr(args, dest, None)
        if value is not None:
            overrides[field] = value
    return replace(cfg, **overrides)


def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    with _open_feed(args.feed) as fh:
        for snap in run_ingest(read_feed(fh), interval=args.interval):
            (out_dir / f"snapshot_{snap.seq:06d}.json").write_bytes(
                export_snapshot(snap) + b"\n")
            count += 1
    log.info("wrote %d snapshots to %s", count, out_dir)
    return 0


def cmd_landmarks(args) -> int:
    snap = _load_snapshot(args.snapshot)
    tier_set = None
    if args.tier_file:
        tokens = Path(args.tier_file).read_text().split()
        tier_set = {int(tok) for tok in tokens}
    result = lm_mod.select(snap, args.method, args.count, seed=args.seed,
                           iters=args.iters, tier_set=tier_set,
                           collector=args.collector)
    payload = json.dumps(result.to_json_obj(seed=args.seed), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    log.info("selected %d landmarks via %s (s1=%.4f s2=%.4f)",
             len(result.members), result.method, result.s1, result.s2)
    return 0


def cmd_monitor(args) -> int:
    config = _base_config(args)
    with _open_feed(args.feed) as fh:
        result = pipeline.run_pipeline(config, read_feed(fh))
    counts: dict[str, int] = {}
    for p in result.points:
        counts[p.classification] = counts.get(p.classification, 0) + 1
    log.info("monitor done: %s (outputs in %s)", counts or "no points",
             config.out_dir)
    return 0


def cmd_explain(args) -> int:
    before = _load_snapshot(args.before)
    after = _load_snapshot(args.after)
    if args.auto:
        if not args.delta:
            raise pipeline.ConfigError("--auto requires --delta")
        dm = curvature.delta_from_json(Path(args.delta).read_text())
        out_dir = Path(args.out or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = []
        for asn, row_energy in rootcause.top_movers(dm, args.top):
            lm = rootcause.worst_landmark(dm, asn)
            entry = {"asn": asn, "row_energy": row_energy, "landmark": lm}
            try:
                diff = rootcause.plan_diff(before, after, asn, lm,
                                           alpha=args.alpha)
            except rootcause.PlanDiffError as exc:
                entry["error"] = str(exc)
            else:
                path = out_dir / f"plan_diff_{asn}_{lm}.csv"
                path.write_text(diff.to_csv())
                entry["movers"] = [[a, s] for a, s in diff.movers[:10]]
                entry["csv"] = path.name
            summary.append(entry)
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
        return 0
    diff = rootcause.plan_diff(before, after, args.asn, args.landmark,
                               alpha=args.alpha)
    csv_text = diff.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    top = ", ".join(f"{a}:{s:+.4f}" for a, s in diff.movers[:5])
    log.info("plan diff (%d, %d): top movers %s", args.asn, args.landmark, top)
    return 0


def cmd_simulate(args) -> int:
    scenario = synth.scenario_from_toml(Path(args.scenario).read_bytes())
    emission = synth.emit_feed(scenario)
    Path(args.out).write_text("\n".join(emission.lines) + "\n")
    if args.labels:
        Path(args.labels).write_text(emission.labels_json() + "\n")
    log.info("scenario %s: %d records, %d labeled events", scenario.name,
             len(emission.records), len(scenario.labels))
    return 0


def cmd_calibrate(args) -> int:
    points = []
    with open(args.points, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                points.append(detector.DetectionPoint.from_json_obj(
                    json.loads(line)))
    report = detector.calibrate(points, n_landmarks=args.landmark_count,
                                drift_only=args.drift_only,
                                thresholds=args.threshold)
    payload = json.dumps(report.to_json_obj(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ricci-mon",
        description="Curvature-based monitoring of dynamic AS-level graphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log verbosity (-v info, -vv debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="replay a feed into snapshot files")
    p.add_argument("--feed", required=True, help="feed file or - for stdin")
    p.add_argument("--interval", type=int, default=60)
    p.add_argument("--out", required=True, help="snapshot output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("landmarks", help="select landmarks from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--method", default="lazy-walk",
                   help="one of: " + ", ".join(m.replace("_", "-")
                                               for m in lm_mod.METHODS))
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--iters", type=int, default=35_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tier-file", help="whitespace-separated core ASN list")
    p.add_argument("--collector", type=int,
                   help="start vertex for random-walk-from-collector")
    p.add_argument("--out", help="output JSON path (stdout if omitted)")
    p.set_defaults(func=cmd_landmarks)

    p = sub.add_parser("monitor", help="run the end-to-end detection pipeline")
    p.add_argument("--feed", required=True)
    p.add_argument("--landmarks", required=True, help="landmark JSON file")
    p.add_argument("--config", help="TOML config overridden by flags")
    p.add_argument("--interval", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--ot", choices=[curvature.EXACT, curvature.APPROX])
    p.add_argument("--threshold", type=float)
    p.add_argument("--gamma-threshold", type=float, dest="gamma_threshold")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="monitor-out")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("explain", help="diff transport plans across an event")
    p.add_argument("--before", required=True, help="snapshot JSON before")
    p.add_argument("--after", required=True, help="snapshot JSON after")
    p.add_argument("--asn", type=int)
    p.add_argument("--landmark", type=int)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--auto", action="store_true",
                   help="pick movers from --delta automatically")
    p.add_argument("--delta", help="delta matrix JSON (with --auto)")
    p.add_argument("-n", "--top", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("simulate", help="compile a scenario TOML into a feed")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="feed output path")
    p.add_argument("--labels", help="ground-truth labels JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit thresholds from detection output")
    p.add_argument("--points", required=True, help="detections.jsonl path")
    p.add_argument("--landmark-count", type=int, required=True)
    p.add_argument("--drift-only", action="store_true")
    p.add_argument("--threshold", type=float, action="append",
                   default=[0.5, 1.0, 2.0])
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "explain" and not args.auto:
        if args.asn is None or args.landmark is None:
            build_parser().error("explain requires --asn and --landmark "
                                 "unless --auto is given")
    try:
        return args.func(args)
    except (pipeline.ConfigError, synth.ScenarioError,
            detector.CalibrationError, rootcause.PlanDiffError) as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
