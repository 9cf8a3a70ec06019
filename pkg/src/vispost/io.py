"""Readers and writers for the interchange files.

* ground truth: JSON ``{videos, annotations, categories}``; per-frame
  ``segmentations`` (RLE or null) and ``bboxes`` (``[x, y, w, h]`` or null),
* detections: JSON lines, one detection per line with an ``[x1, y1, x2, y2]``
  box,
* results: JSON list of ``{video_id, category_id, score, segmentations}``,
* track sets: JSON ``{tracksets: [...]}`` holding detections in the
  detection-record layout.

Readers collect every problem they find and raise :class:`ParseError`
listing them, rather than stopping at the first one.
"""

from __future__ import annotations

import json
import os
from typing import Dict, Iterable, List, Optional, Sequence

from .evaluation import PredictionRecord
from .masks import rle_from_dict, rle_to_dict
from .types import (
    BoundingBox,
    Category,
    Detection,
    Direction,
    GroundTruthDataset,
    GTInstance,
    TrackSet,
    Tracklet,
    VideoInfo,
    validate_dataset,
)


class ParseError(ValueError):
    def __init__(self, path, diagnostics: Sequence[str]):
        self.path = str(path)
        self.diagnostics = list(diagnostics)
        shown = "\n  ".join(self.diagnostics[:20])
        more = f"\n  ... {len(self.diagnostics) - 20} more" if len(self.diagnostics) > 20 else ""
        super().__init__(f"{self.path}:\n  {shown}{more}")


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, [f"line {exc.lineno}: invalid JSON ({exc.msg})"]) from exc


# -- detections ------------------------------------------------------------


def detection_to_record(video_id: int, det: Detection) -> dict:
    return {
        "video_id": video_id,
        "frame": det.frame_index,
        "bbox": det.box.as_list(),
        "score": det.score,
        "category_id": det.category_id,
        "mask": None if det.mask is None else rle_to_dict(det.mask),
        "mask_score": det.mask_score,
        "embedding": None if det.embedding is None else list(det.embedding),
    }


def record_to_detection(rec: dict, require_embedding: bool = False) -> Detection:
    """Raises ``KeyError``/``ValueError``/``TypeError`` with a field-level message."""
    for key in ("video_id", "frame", "bbox", "score", "category_id"):
        if key not in rec:
            raise KeyError(f"missing field {key!r}")
    if require_embedding and rec.get("embedding") is None:
        raise KeyError("missing field 'embedding'")
    bbox = rec["bbox"]
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise ValueError(f"field 'bbox' must be [x1, y1, x2, y2], got {bbox!r}")
    mask = rec.get("mask")
    embedding = rec.get("embedding")
    return Detection(
        frame_index=int(rec["frame"]),
        box=BoundingBox(*(float(v) for v in bbox)),
        score=float(rec["score"]),
        category_id=int(rec["category_id"]),
        mask=None if mask is None else rle_from_dict(mask),
        mask_score=None if rec.get("mask_score") is None else float(rec["mask_score"]),
        embedding=None if embedding is None else tuple(float(v) for v in embedding),
    )


def parse_detections(path, require_embedding: bool = False) -> Dict[int, List[Detection]]:
    """Detections grouped by video id, in file order."""
    out: Dict[int, List[Detection]] = {}
    problems: List[str] = []
    sizes: Dict[int, tuple] = {}
    dims: Dict[int, int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not a JSON object")
                det = record_to_detection(rec, require_embedding)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            except (KeyError, ValueError, TypeError) as exc:
                where = ""
                if isinstance(rec, dict) and "video_id" in rec:
                    where = f" (video {rec.get('video_id')}, frame {rec.get('frame')})"
                msg = exc.args[0] if exc.args else str(exc)
                problems.append(f"line {lineno}{where}: {msg}")
                continue
            vid = int(rec["video_id"])
            if det.mask is not None:
                expected = sizes.setdefault(vid, det.mask.size)
                if det.mask.size != expected:
                    problems.append(
                        f"line {lineno}: mask size {det.mask.size} differs from {expected} earlier in video {vid}"
                    )
                    continue
            if det.embedding is not None:
                expected_dim = dims.setdefault(vid, len(det.embedding))
                if len(det.embedding) != expected_dim:
                    problems.append(
                        f"line {lineno}: embedding length {len(det.embedding)} differs from {expected_dim} earlier in video {vid}"
                    )
                    continue
            out.setdefault(vid, []).append(det)
    if problems:
        raise ParseError(path, problems)
    return out


def write_detections(path, by_video: Dict[int, Sequence[Detection]]):
    with open(path, "w") as fh:
        for vid in sorted(by_video):
            for det in by_video[vid]:
                fh.write(json.dumps(detection_to_record(vid, det), separators=(",", ":"), sort_keys=True))
                fh.write("\n")


# -- ground truth ----------------------------------------------------------


def gt_to_dict(ds: GroundTruthDataset) -> dict:
    return {
        "videos": [
            {
                "id": v.id,
                "width": v.width,
                "height": v.height,
                "length": v.length,
                "file_names": list(v.file_names),
            }
            for v in ds.videos
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
        "annotations": [
            {
                "id": inst.id,
                "video_id": inst.video_id,
                "category_id": inst.category_id,
                "segmentations": [None if m is None else rle_to_dict(m) for m in inst.segmentations],
                "bboxes": [None if b is None else b.to_xywh() for b in inst.boxes],
            }
            for inst in ds.instances
        ],
    }


def gt_from_dict(obj: dict, source="<memory>") -> GroundTruthDataset:
    problems: List[str] = []
    videos, categories, instances = [], [], []
    for n, v in enumerate(obj.get("videos", [])):
        try:
            names = tuple(v.get("file_names") or ())
            length = int(v["length"]) if "length" in v else len(names)
            videos.append(VideoInfo(int(v["id"]), int(v["width"]), int(v["height"]), length, names))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"videos[{n}]: {exc!r}")
    for n, c in enumerate(obj.get("categories", [])):
        try:
            categories.append(Category(int(c["id"]), str(c["name"])))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"categories[{n}]: {exc!r}")
    for n, a in enumerate(obj.get("annotations", [])):
        try:
            segs = tuple(None if s is None else rle_from_dict(s) for s in a.get("segmentations", []))
            boxes = tuple(
                None if b is None else BoundingBox.from_xywh(*(float(x) for x in b))
                for b in a.get("bboxes", [])
            )
            if not boxes:
                boxes = (None,) * len(segs)
            if not segs:
                segs = (None,) * len(boxes)
            instances.append(GTInstance(int(a["id"]), int(a["video_id"]), int(a["category_id"]), segs, boxes))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"annotations[{n}] (id {a.get('id') if isinstance(a, dict) else '?'}): {exc}")
    ds = GroundTruthDataset(tuple(videos), tuple(categories), tuple(instances))
    if not problems:
        problems = [str(v) for v in validate_dataset(ds)]
    if problems:
        raise ParseError(source, problems)
    return ds


def parse_gt(path) -> GroundTruthDataset:
    return gt_from_dict(_load_json(path), path)


def write_gt(path, ds: GroundTruthDataset):
    _dump(gt_to_dict(ds), path)


# -- results ---------------------------------------------------------------


def result_to_record(r: PredictionRecord) -> dict:
    return {
        "video_id": r.video_id,
        "category_id": r.category_id,
        "score": r.score,
        "segmentations": [None if m is None else rle_to_dict(m) for m in r.segmentations],
    }


def parse_results(path) -> List[PredictionRecord]:
    obj = _load_json(path)
    if not isinstance(obj, list):
        raise ParseError(path, ["results file must hold a JSON list"])
    out, problems = [], []
    for n, rec in enumerate(obj):
        try:
            out.append(
                PredictionRecord(
                    int(rec["video_id"]),
                    int(rec["category_id"]),
                    float(rec["score"]),
                    tuple(None if s is None else rle_from_dict(s) for s in rec["segmentations"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"record {n}: {exc!r}")
    if problems:
        raise ParseError(path, problems)
    return out


def write_results(path, records: Iterable[PredictionRecord]):
    _dump([result_to_record(r) for r in records], path)


def tracklet_to_result(t: Tracklet, video_id: int, video_length: int) -> PredictionRecord:
    segs: List[Optional[object]] = [None] * video_length
    for f, det in t.entries.items():
        segs[f] = det.mask
    return PredictionRecord(video_id, t.track_category, t.track_score, tuple(segs))


def tracksets_to_results(tracksets: Iterable[TrackSet]) -> List[PredictionRecord]:
    return [
        tracklet_to_result(t, ts.video_id, ts.video_length)
        for ts in sorted(tracksets, key=lambda ts: ts.video_id)
        for t in ts.tracklets
    ]


# -- track sets ------------------------------------------------------------


def trackset_to_dict(ts: TrackSet) -> dict:
    return {
        "video_id": ts.video_id,
        "video_length": ts.video_length,
        "tracklets": [
            {
                "track_id": t.track_id,
                "direction": t.direction.value,
                "track_score": t.track_score,
                "track_category": t.track_category,
                "detections": [detection_to_record(ts.video_id, d) for d in t.entries.values()],
            }
            for t in ts.tracklets
        ],
    }


def trackset_from_dict(obj: dict) -> TrackSet:
    tracklets = []
    for t in obj["tracklets"]:
        dets = [record_to_detection(d) for d in t["detections"]]
        tracklets.append(
            Tracklet(
                int(t["track_id"]),
                {d.frame_index: d for d in dets},
                Direction(t["direction"]),
                float(t["track_score"]),
                int(t["track_category"]),
            )
        )
    return TrackSet(int(obj["video_id"]), int(obj["video_length"]), tuple(tracklets))


def write_tracksets(path, tracksets: Iterable[TrackSet]):
    _dump({"tracksets": [trackset_to_dict(ts) for ts in sorted(tracksets, key=lambda t: t.video_id)]}, path)


def parse_tracksets(path) -> List[TrackSet]:
    obj = _load_json(path)
    out, problems = [], []
    for n, ts in enumerate(obj.get("tracksets", []) if isinstance(obj, dict) else []):
        try:
            out.append(trackset_from_dict(ts))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"tracksets[{n}]: {exc!r}")
    if not isinstance(obj, dict) or "tracksets" not in obj:
        problems.append("expected a JSON object with a 'tracksets' list")
    if problems:
        raise ParseError(path, problems)
    return out


def ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
