import json

import numpy as np
import pytest

from builders import compensation_frames, det, gt_fixture
from vispost.evaluation import PredictionRecord
from vispost.io import (
    ParseError,
    gt_from_dict,
    gt_to_dict,
    parse_detections,
    parse_gt,
    parse_results,
    parse_tracksets,
    tracksets_to_results,
    write_detections,
    write_gt,
    write_results,
    write_tracksets,
)
from vispost.masks import rle_encode
from vispost.tracker import TrackerParams, track_video


def _random_detections(rng, n_videos=3):
    out = {}
    for vid in range(1, n_videos + 1):
        dets = []
        for t in range(int(rng.integers(1, 5))):
            for _ in range(int(rng.integers(0, 3))):
                x, y = (rng.integers(0, 40, size=2) * 0.25).tolist()
                dets.append(
                    det(
                        t,
                        (x, y, x + 2.5, y + 1.75),
                        float(rng.random()),
                        int(rng.integers(1, 5)),
                        tuple(rng.normal(size=3).tolist()),
                        rle_encode(rng.random((6, 5)) < 0.4),
                        float(rng.random()) if rng.random() < 0.5 else None,
                    )
                )
        out[vid] = dets
    return out


def test_detections_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for _ in range(5):
        dets = {k: v for k, v in _random_detections(rng).items() if v}
        path = tmp_path / "dets.jsonl"
        write_detections(path, dets)
        assert parse_detections(path) == dets


def test_missing_embedding_is_reported_with_location(tmp_path):
    path = tmp_path / "dets.jsonl"
    rec = {"video_id": 4, "frame": 2, "bbox": [0, 0, 1, 1], "score": 0.5, "category_id": 1}
    path.write_text(json.dumps(rec) + "\n")
    assert parse_detections(path)[4][0].embedding is None
    with pytest.raises(ParseError) as info:
        parse_detections(path, require_embedding=True)
    [diag] = info.value.diagnostics
    assert "line 1" in diag and "video 4" in diag and "frame 2" in diag and "embedding" in diag


def test_all_bad_lines_reported(tmp_path):
    path = tmp_path / "dets.jsonl"
    good = {"video_id": 1, "frame": 0, "bbox": [0, 0, 1, 1], "score": 0.5, "category_id": 1}
    lines = [json.dumps(good), "{not json", json.dumps({**good, "bbox": [0, 0, 1]}), json.dumps({**good, "score": 3})]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as info:
        parse_detections(path)
    assert [d.split(":")[0].split(" (")[0] for d in info.value.diagnostics] == ["line 2", "line 3", "line 4"]


def test_run_sum_mismatch_rejected(tmp_path):
    path = tmp_path / "dets.jsonl"
    rec = {
        "video_id": 1, "frame": 0, "bbox": [0, 0, 1, 1], "score": 0.5, "category_id": 1,
        "mask": {"size": [2, 2], "counts": [1, 2]},
    }
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_detections(path)
    with pytest.raises(ParseError, match="run lengths sum to 5"):
        gt_from_dict(
            {
                "videos": [{"id": 1, "width": 2, "height": 2, "length": 1}],
                "categories": [{"id": 1, "name": "a"}],
                "annotations": [
                    {"id": 1, "video_id": 1, "category_id": 1, "segmentations": [{"size": [2, 2], "counts": [5]}]}
                ],
            }
        )


def test_inconsistent_mask_sizes_in_one_video(tmp_path):
    a = det(0, (0, 0, 1, 1), mask=rle_encode(np.ones((2, 2))))
    b = det(1, (0, 0, 1, 1), mask=rle_encode(np.ones((3, 2))))
    path = tmp_path / "dets.jsonl"
    write_detections(path, {1: [a, b]})
    with pytest.raises(ParseError, match="mask size"):
        parse_detections(path)


def test_gt_roundtrip(tmp_path):
    gt = gt_fixture(n_videos=3)
    path = tmp_path / "gt.json"
    write_gt(path, gt)
    assert parse_gt(path) == gt
    assert gt_from_dict(gt_to_dict(gt)) == gt


def test_gt_xywh_boxes_on_disk(tmp_path):
    gt = gt_fixture(n_videos=1)
    d = gt_to_dict(gt)
    ann = d["annotations"][0]
    box = gt.instances[0].boxes[0]
    assert ann["bboxes"][0] == [box.x1, box.y1, box.x2 - box.x1, box.y2 - box.y1]


def test_invalid_gt_reports_violations():
    d = gt_to_dict(gt_fixture(n_videos=1))
    d["annotations"][0]["category_id"] = 77
    with pytest.raises(ValueError, match="77"):
        gt_from_dict(d)


def test_results_roundtrip(tmp_path):
    m = rle_encode(np.eye(3, dtype=bool))
    recs = [PredictionRecord(1, 2, 0.5, (m, None)), PredictionRecord(3, 1, 0.25, (None,))]
    path = tmp_path / "results.json"
    write_results(path, recs)
    assert parse_results(path) == recs


def test_tracksets_roundtrip(tmp_path):
    ts = track_video(compensation_frames(), TrackerParams(), video_id=5)
    path = tmp_path / "tracks.json"
    write_tracksets(path, [ts])
    assert parse_tracksets(path) == [ts]


def test_tracksets_to_results_places_masks_by_frame():
    m = rle_encode(np.ones((2, 2)))
    frames = [[det(0, (0, 0, 2, 2), embedding=(1.0,), mask=m)], [], [det(2, (0, 0, 2, 2), embedding=(1.0,), mask=m)]]
    ts = track_video(frames, TrackerParams(buffer_ttl=3), video_id=9)
    [r] = tracksets_to_results([ts])
    assert r.video_id == 9 and r.segmentations == (m, None, m)


def test_malformed_json_file(tmp_path):
    path = tmp_path / "gt.json"
    path.write_text("{\n  oops")
    with pytest.raises(ParseError, match="line 2"):
        parse_gt(path)
