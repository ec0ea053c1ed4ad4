import json
import os

import pytest

from riccimon import cli, pipeline
from riccimon.detector import DRIFT
from riccimon.feed import read_feed
from riccimon.graph import import_snapshot
from riccimon.landmarks import select
from riccimon.synth import DriftSpec, EventSpec, LabelSpec, Scenario, emit_feed

SCENARIO = Scenario(
    name="mini", topology_kind="scale_free",
    topology_params={"n": 200, "attach": 2}, topology_seed=5, seed=8,
    prefix_profile="heavy_tail",
    drift=DriftSpec(rate=12, minutes=5),
    events=(EventSpec(t=330, kind="leak", params={"breadth": 12, "origin": 9}),),
    labels=(LabelSpec(t=330, expected="GLOBAL"),),
)


@pytest.fixture(scope="module")
def emission():
    return emit_feed(SCENARIO)


@pytest.fixture(scope="module")
def landmark_members(emission):
    first = None
    from riccimon.feed import run_ingest
    for snap in run_ingest(iter(emission.records), interval=60):
        first = snap
        break
    return list(select(first, "lazy_walk", 8, seed=3, iters=400).members)


class TestRunPipeline:
    def test_outputs_and_points(self, tmp_path, emission, landmark_members):
        config = pipeline.MonitorConfig(out_dir=str(tmp_path / "out"))
        result = pipeline.run_pipeline(config, iter(emission.records),
                                       landmarks=landmark_members)
        assert result.snapshots_seen >= 6
        assert len(result.points) == result.snapshots_seen - 1
        assert (tmp_path / "out" / "config.json").exists()
        lines = (tmp_path / "out" / "detections.jsonl").read_text().splitlines()
        assert len(lines) == len(result.points)
        first = json.loads(lines[0])
        assert set(first) == {"seq", "t", "energy", "gamma_inv", "sum_pos",
                              "sum_neg", "m", "class"}
        phase = (tmp_path / "out" / "phase.csv").read_text().splitlines()
        assert phase[0] == "energy,gamma_inv,class"
        assert len(phase) == len(result.points) + 1

    def test_byte_identical_reruns(self, tmp_path, emission, landmark_members):
        blobs = []
        for name in ("a", "b"):
            config = pipeline.MonitorConfig(out_dir=str(tmp_path / name))
            pipeline.run_pipeline(config, iter(emission.records),
                                  landmarks=landmark_members)
            blobs.append((tmp_path / name / "detections.jsonl").read_bytes())
        assert blobs[0] == blobs[1]

    def test_low_threshold_emits_explain_bundle(self, tmp_path, emission,
                                                landmark_members):
        config = pipeline.MonitorConfig(out_dir=str(tmp_path / "out"),
                                        threshold=0.01, explain_top=2)
        result = pipeline.run_pipeline(config, iter(emission.records),
                                       landmarks=landmark_members)
        bundles = sorted((tmp_path / "out").glob("explain_seq*"))
        globals_seen = [p for p in result.points if p.classification == "GLOBAL"]
        assert globals_seen, "expected at least one GLOBAL at a tiny threshold"
        assert bundles, "explain bundle missing"
        movers = json.loads((bundles[0] / "movers.json").read_text())
        assert len(movers) == 2
        assert (bundles[0] / "delta.json").exists()

    def test_missing_landmarks_config_error(self, tmp_path, emission):
        config = pipeline.MonitorConfig(out_dir=str(tmp_path / "out"))
        with pytest.raises(pipeline.ConfigError, match="landmarks"):
            pipeline.run_pipeline(config, iter(emission.records))

    def test_env_caps_workers(self, tmp_path, monkeypatch):
        monkeypatch.setenv(pipeline.ENV_THREADS, "2")
        config = pipeline.MonitorConfig(workers=8).validated()
        assert config.workers == 2
        monkeypatch.setenv(pipeline.ENV_THREADS, "notanumber")
        with pytest.raises(pipeline.ConfigError):
            pipeline.MonitorConfig(workers=8).validated()

    def test_config_toml_overlay(self):
        cfg = pipeline.config_from_toml('threshold = 0.5\ninterval = 30\n')
        assert cfg.threshold == 0.5
        assert cfg.interval == 30
        with pytest.raises(pipeline.ConfigError, match="unknown config"):
            pipeline.config_from_toml("bogus = 1\n")


def run_cli(*args):
    return cli.main([str(a) for a in args])


class TestCli:
    @pytest.fixture()
    def workspace(self, tmp_path, emission):
        feed_path = tmp_path / "feed.txt"
        feed_path.write_text("\n".join(emission.lines) + "\n")
        return tmp_path, feed_path

    def test_simulate_writes_feed_and_labels(self, tmp_path):
        scenario_toml = tmp_path / "s.toml"
        scenario_toml.write_text(
            'name = "sim"\n'
            'prefix_profile = "heavy_tail"\n'
            '[topology]\n'
            'kind = "scale_free"\nn = 150\nattach = 2\nseed = 4\n'
            '[drift]\nrate = 5\nminutes = 2\n'
            '[[events]]\nt = 200\nkind = "leak"\nbreadth = 8\norigin = 9\n'
            '[[labels]]\nt = 200\nexpected = "GLOBAL"\n')
        feed = tmp_path / "feed.txt"
        labels = tmp_path / "labels.json"
        assert run_cli("simulate", "--scenario", scenario_toml,
                       "--out", feed, "--labels", labels) == 0
        assert feed.read_text().count("\n") > 100
        assert json.loads(labels.read_text()) == [
            {"t": 1_700_000_000 + 200, "expected": "GLOBAL"}]
        for line in feed.read_text().splitlines()[:50]:
            assert list(read_feed([line]))  # every line parses

    def test_ingest_writes_snapshots(self, tmp_path, workspace):
        ws, feed_path = workspace
        out = ws / "snaps"
        assert run_cli("ingest", "--feed", feed_path, "--interval", 60,
                       "--out", out) == 0
        files = sorted(out.glob("snapshot_*.json"))
        assert len(files) >= 6
        snap = import_snapshot(files[0].read_bytes())
        assert snap.seq == 1
        assert snap.vertex_count == 200

    def test_landmarks_then_monitor_then_explain(self, workspace):
        ws, feed_path = workspace
        snaps = ws / "snaps"
        run_cli("ingest", "--feed", feed_path, "--out", snaps)
        snap_files = sorted(snaps.glob("snapshot_*.json"))

        lm_path = ws / "landmarks.json"
        assert run_cli("landmarks", "--snapshot", snap_files[0],
                       "--method", "lazy-walk", "--count", 8,
                       "--iters", 400, "--seed", 3, "--out", lm_path) == 0
        lm_obj = json.loads(lm_path.read_text())
        assert lm_obj["method"] == "lazy_walk"
        assert len(lm_obj["members"]) == 8
        assert 0 < lm_obj["s1"] <= 1

        out = ws / "mon"
        assert run_cli("monitor", "--feed", feed_path, "--landmarks", lm_path,
                       "--threshold", 0.05, "--out", out) == 0
        points = [json.loads(l) for l in
                  (out / "detections.jsonl").read_text().splitlines()]
        assert len(points) >= 5
        classes = {p["class"] for p in points}
        assert classes <= {"GLOBAL", "LOCAL", "DRIFT"}

        # explain across the event boundary for the strongest mover
        strongest = max(points, key=lambda p: p["energy"])
        seq = strongest["seq"]
        before = snap_files[seq - 2]
        after = snap_files[seq - 1]
        diff_csv = ws / "diff.csv"
        pt = json.loads(lm_path.read_text())["members"][0]
        rc = run_cli("explain", "--before", before, "--after", after,
                     "--asn", 9, "--landmark", pt, "--out", diff_csv)
        assert rc == 0
        assert diff_csv.read_text().startswith("row_asn,col_asn,mass_change")

    def test_monitor_determinism_byte_identical(self, workspace):
        ws, feed_path = workspace
        snaps = ws / "snaps2"
        run_cli("ingest", "--feed", feed_path, "--out", snaps)
        lm_path = ws / "lm.json"
        run_cli("landmarks", "--snapshot",
                sorted(snaps.glob("*.json"))[0], "--count", 6,
                "--iters", 200, "--seed", 1, "--out", lm_path)
        outs = []
        for name in ("m1", "m2"):
            run_cli("monitor", "--feed", feed_path, "--landmarks", lm_path,
                    "--out", ws / name)
            outs.append((ws / name / "detections.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_calibrate_from_points(self, tmp_path):
        import numpy as np
        rng = np.random.default_rng(3)
        lines = []
        for k, e in enumerate(rng.gamma(0.5, 0.01, size=200)):
            lines.append(json.dumps({
                "seq": k + 2, "t": (k + 2) * 60, "energy": float(e),
                "gamma_inv": 0.8, "sum_pos": float(e), "sum_neg": 0.0,
                "m": 10, "class": DRIFT}))
        pts = tmp_path / "detections.jsonl"
        pts.write_text("\n".join(lines) + "\n")
        out = tmp_path / "cal.json"
        assert run_cli("calibrate", "--points", pts, "--landmark-count", 20,
                       "--out", out) == 0
        report = json.loads(out.read_text())
        assert report["points_used"] == 200
        assert report["gamma_shape"] > 0

    def test_bad_scenario_returns_error_code(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text('name = "x"\n')
        assert run_cli("simulate", "--scenario", bad,
                       "--out", tmp_path / "f.txt") == 1

    def test_missing_feed_file_returns_error_code(self, tmp_path):
        lm = tmp_path / "lm.json"
        lm.write_text('{"members": [1, 2]}')
        assert run_cli("monitor", "--feed", tmp_path / "nope.txt",
                       "--landmarks", lm, "--out", tmp_path / "o") == 1
