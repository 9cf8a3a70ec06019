"""Online tracking-by-detection with an embedding + IoU affinity and a buffer
of active and recently lost tracks.

The same tracker produces forward and backward passes; the direction only
changes the order in which frames are visited.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .masks import box_iou
from .types import DimensionError, Direction, Detection, TrackSet, Tracklet


@dataclass(frozen=True)
class TrackerParams:
    sim_threshold: float = 0.5
    init_score: float = 0.2
    buffer_ttl: int = 10
    embed_momentum: float = 0.8
    iou_weight: float = 0.3
    require_same_category: bool = False
    optimal_assignment: bool = False

    def __post_init__(self):
        if not 0.0 < self.sim_threshold < 1.0:
            raise ValueError(f"sim_threshold {self.sim_threshold} outside (0, 1)")
        if not 0.0 < self.init_score < 1.0:
            raise ValueError(f"init_score {self.init_score} outside (0, 1)")
        if self.buffer_ttl < 0:
            raise ValueError(f"buffer_ttl must be >= 0, got {self.buffer_ttl}")
        if not 0.0 <= self.embed_momentum <= 1.0:
            raise ValueError(f"embed_momentum {self.embed_momentum} outside [0, 1]")
        if not 0.0 <= self.iou_weight <= 1.0:
            raise ValueError(f"iou_weight {self.iou_weight} outside [0, 1]")


@dataclass
class BufferEntry:
    last: Detection
    embedding: np.ndarray
    frames_since_seen: int = 0


@dataclass
class TrackBuffer:
    """Mutable tracker state for one video. Entries keep insertion order."""

    entries: Dict[int, BufferEntry] = field(default_factory=dict)
    next_id: int = 0

    def fresh_id(self) -> int:
        tid = self.next_id
        self.next_id += 1
        return tid


def embed_similarity(a, b) -> float:
    """Cosine similarity."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def affinity(track: BufferEntry, det: Detection, p: TrackerParams) -> float:
    sim = (embed_similarity(track.embedding, det.embedding) + 1.0) / 2.0
    return p.iou_weight * box_iou(track.last.box, det.box) + (1.0 - p.iou_weight) * sim


def greedy_assignment(scores: np.ndarray, threshold: float) -> List[tuple]:
    """Pairs (row, col) taken by descending score, each row and column once;
    only scores strictly above ``threshold`` are eligible. Ties resolve to the
    lower row, then the lower column."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return []
    rows, cols = np.nonzero(scores > threshold)
    order = np.lexsort((cols, rows, -scores[rows, cols]))
    used_r, used_c, pairs = set(), set(), []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((r, c))
    return sorted(pairs)


def optimal_assignment(scores: np.ndarray, threshold: float) -> List[tuple]:
    """Maximum-total-score one-to-one matching among entries above ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return []
    eligible = scores > threshold
    # zero-weight cells may be forced into the solution; they are dropped below
    weights = np.where(eligible, scores, 0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if eligible[r, c])


def associate_frame(
    buffer: TrackBuffer, dets: Sequence[Detection], p: TrackerParams
) -> List[Optional[int]]:
    """Assign each detection of one frame to a buffered track id, a fresh id,
    or ``None`` (unmatched and below the initialisation score).

    Mutates ``buffer``: matched tracks take the new box and an EMA embedding,
    unmatched tracks age by one frame and are evicted past ``buffer_ttl``.
    """
    frames = {d.frame_index for d in dets}
    if len(frames) > 1:
        raise ValueError(f"detections span several frames: {sorted(frames)}")
    for i, d in enumerate(dets):
        if d.embedding is None:
            raise ValueError(f"detection {i} in frame {d.frame_index} has no embedding")

    track_ids = list(buffer.entries)
    scores = np.zeros((len(dets), len(track_ids)))
    for i, d in enumerate(dets):
        for j, tid in enumerate(track_ids):
            entry = buffer.entries[tid]
            if p.require_same_category and entry.last.category_id != d.category_id:
                scores[i, j] = -np.inf
            else:
                scores[i, j] = affinity(entry, d, p)

    solve = optimal_assignment if p.optimal_assignment else greedy_assignment
    pairs = solve(scores, p.sim_threshold)

    assigned: List[Optional[int]] = [None] * len(dets)
    matched_tracks = set()
    for i, j in pairs:
        tid = track_ids[j]
        assigned[i] = tid
        matched_tracks.add(tid)
        entry = buffer.entries[tid]
        new_emb = np.asarray(dets[i].embedding, dtype=np.float64)
        entry.embedding = p.embed_momentum * entry.embedding + (1.0 - p.embed_momentum) * new_emb
        entry.last = dets[i]
        entry.frames_since_seen = 0

    for tid in track_ids:
        if tid in matched_tracks:
            continue
        entry = buffer.entries[tid]
        entry.frames_since_seen += 1
        if entry.frames_since_seen > p.buffer_ttl:
            del buffer.entries[tid]

    for i, d in enumerate(dets):
        if assigned[i] is None and d.score >= p.init_score:
            tid = buffer.fresh_id()
            buffer.entries[tid] = BufferEntry(d, np.asarray(d.embedding, dtype=np.float64))
            assigned[i] = tid
    return assigned


def track_video(
    frames: Sequence[Sequence[Detection]],
    p: TrackerParams,
    direction: Direction = Direction.FORWARD,
    video_id: int = 0,
) -> TrackSet:
    """Run one association pass over ``frames`` (index == frame index)."""
    direction = Direction(direction)
    if direction is Direction.MERGED:
        raise ValueError("track_video runs forward or backward only")
    order = range(len(frames)) if direction is Direction.FORWARD else range(len(frames) - 1, -1, -1)

    dims = {len(d.embedding) for d in itertools.chain.from_iterable(frames) if d.embedding is not None}
    if len(dims) > 1:
        raise DimensionError(f"video {video_id}: mixed embedding dimensions {sorted(dims)}")

    buffer = TrackBuffer()
    members: Dict[int, List[Detection]] = {}
    for t in order:
        dets = list(frames[t])
        for d in dets:
            if d.frame_index != t:
                raise ValueError(f"detection with frame {d.frame_index} listed under frame {t}")
        for d, tid in zip(dets, associate_frame(buffer, dets, p)):
            if tid is not None:
                members.setdefault(tid, []).append(d)

    tracklets = [
        Tracklet.from_detections(tid, members[tid], direction) for tid in sorted(members)
    ]
    return TrackSet(video_id, len(frames), tuple(tracklets))
