import dataclasses
import json

import numpy as np
import pytest

from builders import compensation_frames, det, detections_from_gt, gt_fixture, one_hot
from vispost import io
from vispost.cli import main
from vispost.config import WORKERS_ENV
from vispost.ensemble import rescale_detection
from vispost.evaluation import PredictionRecord


@pytest.fixture(autouse=True)
def _no_worker_env(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


@pytest.fixture
def files(tmp_path):
    gt = gt_fixture()
    gt_path = tmp_path / "gt.json"
    det_path = tmp_path / "dets.jsonl"
    io.write_gt(gt_path, gt)
    io.write_detections(det_path, detections_from_gt(gt))
    return tmp_path, gt_path, det_path


def _write_frames(path, frames, video_id=0):
    io.write_detections(path, {video_id: [d for f in frames for d in f]})


def test_track_writes_one_trackset_per_video(tmp_path):
    det_path, out = tmp_path / "d.jsonl", tmp_path / "t.json"
    _write_frames(det_path, compensation_frames())
    assert main(["track", "--detections", str(det_path), "--out", str(out)]) == 0
    [ts] = io.parse_tracksets(out)
    assert ts.video_id == 0 and len(ts.tracklets) == 2


def test_track_missing_embedding_names_record(tmp_path, capsys):
    det_path = tmp_path / "d.jsonl"
    rec = {"video_id": 3, "frame": 5, "bbox": [0, 0, 1, 1], "score": 0.5, "category_id": 1}
    det_path.write_text(json.dumps(rec) + "\n")
    code = main(["track", "--detections", str(det_path), "--out", str(tmp_path / "t.json")])
    err = capsys.readouterr().err
    assert code == 2
    assert "line 1" in err and "video 3" in err and "frame 5" in err and "embedding" in err


def test_backward_on_reversed_input_matches_forward(tmp_path):
    frames = compensation_frames(ambiguous=True)
    n = len(frames)
    reversed_frames = [[dataclasses.replace(d, frame_index=n - 1 - t) for d in frames[t]] for t in range(n)]
    _write_frames(tmp_path / "fwd.jsonl", frames)
    _write_frames(tmp_path / "rev.jsonl", reversed_frames)
    main(["track", "--detections", str(tmp_path / "fwd.jsonl"), "--out", str(tmp_path / "a.json")])
    main(["track", "--direction", "backward", "--detections", str(tmp_path / "rev.jsonl"), "--out", str(tmp_path / "b.json")])
    [a], [b] = io.parse_tracksets(tmp_path / "a.json"), io.parse_tracksets(tmp_path / "b.json")
    canon_a = sorted(tuple(t.frames) for t in a.tracklets)
    canon_b = sorted(tuple(sorted(n - 1 - f for f in t.frames)) for t in b.tracklets)
    assert canon_a == canon_b


def test_pipeline_gt_fed_reports_perfect_map(files, capsys):
    tmp, gt_path, det_path = files
    report = tmp / "m.json"
    code = main(["pipeline", "--detections", str(det_path), "--gt", str(gt_path), "--out", str(tmp / "r.json"), "--report", str(report)])
    assert code == 0
    metrics = json.loads(report.read_text())
    assert metrics["mAP"] == 1.0 and metrics["AR10"] == 1.0
    assert "mAP" in capsys.readouterr().out


def test_pipeline_half_videos_dropped(files):
    tmp, gt_path, _ = files
    gt = io.parse_gt(gt_path)
    half = {vid: d for vid, d in detections_from_gt(gt).items() if vid % 2}
    io.write_detections(tmp / "half.jsonl", half)
    main(["pipeline", "--detections", str(tmp / "half.jsonl"), "--gt", str(gt_path), "--out", str(tmp / "r.json"), "--report", str(tmp / "m.json")])
    metrics = json.loads((tmp / "m.json").read_text())
    assert metrics["AR1"] == pytest.approx(0.5) and metrics["AR10"] == pytest.approx(0.5)


def test_pipeline_merge_threshold(tmp_path):
    _write_frames(tmp_path / "d.jsonl", compensation_frames(ambiguous=True))
    sizes = {}
    for thr in ("0.5", "0.99"):
        out = tmp_path / f"t{thr}.json"
        main(["pipeline", "--detections", str(tmp_path / "d.jsonl"), "--set", f"bitrack.thr={thr}", "--out", str(tmp_path / "r.json"), "--out-tracks", str(out)])
        sizes[thr] = len(io.parse_tracksets(out)[0].tracklets)
    assert sizes["0.99"] > sizes["0.5"]


def test_pipeline_without_bitrack_equals_track_then_postprocess(tmp_path):
    d = tmp_path / "d.jsonl"
    _write_frames(d, compensation_frames())
    main(["pipeline", "--detections", str(d), "--no-bitrack", "--out", str(tmp_path / "a.json")])
    main(["track", "--detections", str(d), "--out", str(tmp_path / "t.json")])
    main(["postprocess", "--tracks", str(tmp_path / "t.json"), "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_stepwise_commands_equal_pipeline(tmp_path):
    d = tmp_path / "d.jsonl"
    _write_frames(d, compensation_frames())
    main(["pipeline", "--detections", str(d), "--out", str(tmp_path / "p.json")])
    main(["track", "--detections", str(d), "--out", str(tmp_path / "f.json")])
    main(["track", "--direction", "backward", "--detections", str(d), "--out", str(tmp_path / "b.json")])
    main(["bitrack", "--forward", str(tmp_path / "f.json"), "--backward", str(tmp_path / "b.json"), "--out", str(tmp_path / "m.json")])
    main(["postprocess", "--tracks", str(tmp_path / "m.json"), "--out", str(tmp_path / "r.json")])
    assert (tmp_path / "p.json").read_bytes() == (tmp_path / "r.json").read_bytes()


def test_pipeline_worker_count_does_not_change_output(files, monkeypatch):
    tmp, gt_path, det_path = files
    main(["pipeline", "--detections", str(det_path), "--gt", str(gt_path), "--out", str(tmp / "one.json")])
    main(["pipeline", "--detections", str(det_path), "--gt", str(gt_path), "--workers", "3", "--out", str(tmp / "three.json")])
    monkeypatch.setenv(WORKERS_ENV, "2")
    main(["pipeline", "--detections", str(det_path), "--gt", str(gt_path), "--out", str(tmp / "two.json")])
    assert (tmp / "one.json").read_bytes() == (tmp / "three.json").read_bytes() == (tmp / "two.json").read_bytes()


def test_eval_subcommand(files):
    tmp, gt_path, _ = files
    gt = io.parse_gt(gt_path)
    io.write_results(tmp / "r.json", [PredictionRecord(i.video_id, i.category_id, 0.5, i.segmentations) for i in gt.instances])
    assert main(["eval", "--results", str(tmp / "r.json"), "--gt", str(gt_path), "--json", str(tmp / "m.json")]) == 0
    assert json.loads((tmp / "m.json").read_text())["AP50"] == 1.0


def test_analyze_and_subsample(tmp_path, capsys):
    gt_path = tmp_path / "gt.json"
    io.write_gt(gt_path, gt_fixture(n_videos=2, length=30))
    assert main(["analyze-redundancy", "--gt", str(gt_path), "--bins", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "bin_left,bin_right,count" and lines[-1].endswith(",2")
    assert main(["subsample", "--gt", str(gt_path), "-k", "5", "--out", str(tmp_path / "sub.json")]) == 0
    assert "16.7%" in capsys.readouterr().out
    assert [v.length for v in io.parse_gt(tmp_path / "sub.json").videos] == [5, 5]


def test_synth_pairs_requires_seed_and_is_deterministic(files, capsys):
    tmp, gt_path, _ = files
    assert main(["synth-pairs", "--gt", str(gt_path), "--out", str(tmp / "p.json")]) == 2
    assert "seed" in capsys.readouterr().err
    for name in ("a", "b"):
        assert main(["synth-pairs", "--gt", str(gt_path), "--seed", "3", "--out", str(tmp / f"{name}.json")]) == 0
    assert (tmp / "a.json").read_bytes() == (tmp / "b.json").read_bytes()
    pairs = json.loads((tmp / "a.json").read_text())
    assert len(pairs) == 4
    for p in pairs:
        assert [o["track_id"] for o in p["key"]] == [o["track_id"] for o in p["reference"]]


def test_fuse_labels(tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.random((20, 5))
    labels = rng.integers(1, 5, size=20)
    table = tmp_path / "scores.csv"
    table.write_text("c1,c2,c3,a1,a2,label\n" + "".join(",".join(map(str, r)) + f",{l}\n" for r, l in zip(rows, labels)))
    out = tmp_path / "labels.csv"
    args = ["fuse-labels", "--input", str(table), "--num-classes", "3", "--num-aux", "2", "--out", str(out)]
    assert main(args) == 2  # no seed
    assert main(args + ["--seed", "1"]) == 0
    got = [int(v) for v in out.read_text().split()[1:]]
    assert len(got) == 20
    for g, l in zip(got, labels):
        assert g == l if l <= 3 else 4 <= g <= 5


def test_pseudo_filter(tmp_path):
    d = tmp_path / "d.jsonl"
    frames = compensation_frames()
    frames[3].append(det(3, (200, 200, 210, 210), 0.9, 1, one_hot(7)))  # one-frame track
    _write_frames(d, frames)
    main(["track", "--detections", str(d), "--out", str(tmp_path / "t.json")])
    assert main(["pseudo-filter", "--tracks", str(tmp_path / "t.json"), "--out", str(tmp_path / "p.json")]) == 0
    records = json.loads((tmp_path / "p.json").read_text())["annotations"]
    assert all(r["bbox"][0] != 200 for r in records)
    assert len(records) == 12 + 6


def test_ensemble_with_scale_tag(files):
    tmp, gt_path, det_path = files
    gt = io.parse_gt(gt_path)
    dets = detections_from_gt(gt)
    # what a model run on half-size frames would have written
    halved = {vid: [rescale_detection(d, 2.0, (24, 32)) for d in ds] for vid, ds in dets.items()}
    io.write_detections(tmp / "half.jsonl", halved)
    out = tmp / "e.jsonl"
    assert main(["ensemble", "--detections", str(det_path), f"{tmp / 'half.jsonl'}@0.5", "--gt", str(gt_path), "--out", str(out)]) == 0
    fused = io.parse_detections(out)
    assert sum(map(len, fused.values())) == sum(map(len, dets.values()))


def test_config_file_and_bad_key(tmp_path, capsys):
    d = tmp_path / "d.jsonl"
    _write_frames(d, compensation_frames())
    cfg = tmp_path / "c.yaml"
    cfg.write_text("tracker:\n  colour: red\n")
    assert main(["track", "--config", str(cfg), "--detections", str(d), "--out", str(tmp_path / "t.json")]) == 2
    assert "colour" in capsys.readouterr().err
    cfg.write_text("tracker:\n  buffer_ttl: 0\n")
    assert main(["track", "--config", str(cfg), "--detections", str(d), "--out", str(tmp_path / "t.json")]) == 0
