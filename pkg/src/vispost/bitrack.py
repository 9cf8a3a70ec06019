"""Bidirectional tracking: pair overlapping forward and backward tracklets
and merge each pair into one final tracklet."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Sequence

from .masks import box_iou
from .postproc import vote_label
from .types import Detection, Direction, TrackSet, Tracklet


@dataclass(frozen=True)
class BiTrackParams:
    thr: float = 0.5
    min_valid_frames: int = 1

    def __post_init__(self):
        if not 0.0 < self.thr < 1.0:
            raise ValueError(f"thr {self.thr} outside (0, 1)")
        if self.min_valid_frames < 1:
            raise ValueError(f"min_valid_frames must be positive, got {self.min_valid_frames}")


def mean_valid_iou(f: Tracklet, b: Tracklet) -> tuple:
    """(number of frames both tracklets cover, mean box IoU over those frames)."""
    valid = [t for t in f.entries if t in b.entries]
    if not valid:
        return 0, 0.0
    total = sum(box_iou(f.entries[t].box, b.entries[t].box) for t in valid)
    return len(valid), total / len(valid)


def is_overlap(f: Tracklet, b: Tracklet, p: BiTrackParams) -> bool:
    n_valid, mean_iou = mean_valid_iou(f, b)
    return n_valid >= p.min_valid_frames and mean_iou > p.thr


def merge(f: Tracklet, b: Tracklet) -> Tracklet:
    """Frame-wise union; on shared frames the higher-scoring detection wins
    and ties keep ``f``'s."""
    entries: Dict[int, Detection] = dict(f.entries)
    for t, det in b.entries.items():
        if t not in entries or det.score > entries[t].score:
            entries[t] = det
    score = sum(d.score for d in entries.values()) / len(entries)
    draft = Tracklet(f.track_id, entries, Direction.MERGED, score, f.track_category)
    return dataclasses.replace(draft, track_category=vote_label(draft))


def _by_confidence(tracks: Sequence[Tracklet]) -> List[Tracklet]:
    return sorted(tracks, key=lambda t: (-t.track_score, t.track_id))


def bitrack_merge(F: TrackSet, B: TrackSet, p: BiTrackParams = BiTrackParams()) -> TrackSet:
    """Greedy first-come pairing of forward against backward tracklets.

    Both sides are visited in descending track score. Each forward tracklet
    merges with at most one backward tracklet (the inner scan stops at the
    first match). Unmatched tracklets pass through unchanged apart from
    their id; ids are renumbered 0..n-1 in output order.
    """
    if F.video_id != B.video_id:
        raise ValueError(f"cannot merge tracks of videos {F.video_id} and {B.video_id}")
    forward = _by_confidence(F.tracklets)
    backward = _by_confidence(B.tracklets)

    merged: List[Tracklet] = []
    matched_f, matched_b = set(), set()
    for i, f in enumerate(forward):
        for j, b in enumerate(backward):
            if j in matched_b or not is_overlap(f, b, p):
                continue
            merged.append(merge(f, b))
            matched_b.add(j)
            matched_f.add(i)
            break

    out = merged
    out += [f for i, f in enumerate(forward) if i not in matched_f]
    out += [b for j, b in enumerate(backward) if j not in matched_b]
    out = [dataclasses.replace(t, track_id=k) for k, t in enumerate(out)]
    return TrackSet(F.video_id, max(F.video_length, B.video_length), tuple(out))
