"""Track-level refinements: label voting, mask-score calibration and the
trackability filter used to select detection pseudo labels."""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from typing import Dict, Iterable, List

from .types import Detection, TrackSet, Tracklet


def vote_label(t: Tracklet) -> int:
    """Most frequent category; ties go to the larger summed score, then the
    smaller category id."""
    scores: Dict[int, List[float]] = defaultdict(list)
    for det in t.entries.values():
        scores[det.category_id].append(det.score)
    # sorted summation keeps the tie-break independent of entry order
    return min(scores, key=lambda c: (-len(scores[c]), -sum(sorted(scores[c])), c))


def relabel(t: Tracklet) -> Tracklet:
    return dataclasses.replace(t, track_category=vote_label(t))


def calibrate_score(d: Detection) -> Detection:
    if d.mask_score is None:
        return d
    return dataclasses.replace(d, score=d.score * d.mask_score)


def calibrate_tracklet(t: Tracklet) -> Tracklet:
    """Calibrate every entry and refresh the track score as the new mean."""
    entries = {f: calibrate_score(d) for f, d in t.entries.items()}
    score = sum(d.score for d in entries.values()) / len(entries)
    return dataclasses.replace(t, entries=entries, track_score=score)


def filter_trackable(tracks: TrackSet, min_len: int = 2) -> List[Detection]:
    if min_len < 1:
        raise ValueError(f"min_len must be positive, got {min_len}")
    out: List[Detection] = []
    for t in tracks.tracklets:
        if len(t) >= min_len:
            out.extend(t.entries.values())
    return out


def pseudo_label_records(tracksets: Iterable[TrackSet], min_len: int = 2) -> List[dict]:
    """Detection-only pseudo labels (no masks) from trackable tracklets."""
    records = []
    for ts in tracksets:
        for t in ts.tracklets:
            if len(t) < min_len:
                continue
            for det in t.entries.values():
                records.append(
                    {
                        "video_id": ts.video_id,
                        "frame": det.frame_index,
                        "track_id": t.track_id,
                        "bbox": det.box.to_xywh(),
                        "category_id": det.category_id,
                        "score": det.score,
                    }
                )
    return records
