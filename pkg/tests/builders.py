"""Synthetic detections and annotation sets shared by the test modules."""

from __future__ import annotations

import numpy as np

from vispost.masks import mask_to_box, rle_encode
from vispost.types import (
    BoundingBox,
    Category,
    Detection,
    GroundTruthDataset,
    GTInstance,
    VideoInfo,
)


def one_hot(i, dim=8):
    v = [0.0] * dim
    v[i] = 1.0
    return tuple(v)


def det(frame, box, score=0.9, category=1, embedding=None, mask=None, mask_score=None):
    return Detection(frame, BoundingBox(*box), score, category, mask, mask_score, embedding)


def box_mask(box, height, width):
    grid = np.zeros((height, width), dtype=bool)
    x1, y1, x2, y2 = (int(v) for v in box)
    grid[y1:y2, x1:x2] = True
    return rle_encode(grid)


def compensation_frames(length=12, ambiguous=False):
    """Two objects with direction-dependent detectability.

    X is confidently detected only in the second half of the video and Y
    only in the first half; the low-confidence detections can extend an
    existing track but never start one. A forward pass therefore recovers
    Y in full and only the tail of X, a backward pass the reverse.

    With ``ambiguous=True`` frame 9 carries two weak candidates for X: one
    matching its early appearance, one shifted with its late appearance, so
    the two passes disagree about X's box on that frame.
    """
    half = length // 2
    xbox, ybox = (10, 10, 30, 30), (60, 60, 80, 80)
    u, v = one_hot(0), one_hot(1)
    ey = one_hot(2)
    frames = []
    for t in range(length):
        dets = []
        x_score = 0.9 if t >= half else 0.1
        y_score = 0.9 if t < half else 0.1
        x_emb = u if (not ambiguous or t < 9) else v
        if ambiguous and t == 9:
            dets.append(det(t, xbox, 0.15, 1, u))
            dets.append(det(t, (13, 10, 33, 30), 0.15, 1, v))
        else:
            dets.append(det(t, xbox, x_score, 1, x_emb))
        dets.append(det(t, ybox, y_score, 2, ey))
        frames.append(dets)
    return frames


def make_gt_video(video_id, length, height, width, tracks, first_instance_id=1):
    """``tracks``: list of (category_id, [box or None per frame]) with integer boxes."""
    instances = []
    for n, (cat, boxes) in enumerate(tracks):
        segs = tuple(None if b is None else box_mask(b, height, width) for b in boxes)
        bxs = tuple(None if b is None else BoundingBox(*map(float, b)) for b in boxes)
        instances.append(GTInstance(first_instance_id + n, video_id, cat, segs, bxs))
    return VideoInfo(video_id, width, height, length), instances


def gt_fixture(n_videos=4, length=6, height=48, width=64):
    """Each video holds one category-1 and one category-2 object, far apart and
    drifting slowly to the right."""
    videos, instances = [], []
    next_id = 1
    for vid in range(1, n_videos + 1):
        a = [(2 + t, 4, 14 + t, 16) for t in range(length)]
        b = [(30 + t, 24 + vid, 44 + t, 40 + vid) for t in range(length)]
        v, inst = make_gt_video(vid, length, height, width, [(1, a), (2, b)], next_id)
        next_id += len(inst)
        videos.append(v)
        instances.extend(inst)
    cats = (Category(1, "bird"), Category(2, "fish"))
    return GroundTruthDataset(tuple(videos), cats, tuple(instances))


def detections_from_gt(gt, score=0.9, corrupt=None, dim=8):
    """Perfect detections: GT masks and boxes, one-hot embedding per instance.

    ``corrupt``: optional callable (instance, frame) -> replacement category or None.
    """
    by_video = {}
    for k, inst in enumerate(gt.instances):
        for t, m in enumerate(inst.segmentations):
            if m is None:
                continue
            cat = inst.category_id
            if corrupt is not None:
                cat = corrupt(inst, t) or cat
            d = Detection(t, mask_to_box(m), score, cat, m, None, one_hot(k % dim, dim))
            by_video.setdefault(inst.video_id, []).append(d)
    return by_video


def tracklet_from_plain(track, direction):
    """Tracklet from the plain dict form used by the bidirectional simulator."""
    from vispost.types import Tracklet

    entries = {
        t: det(t, e[:4], e[4], e[5], one_hot(0)) for t, e in track["frames"].items()
    }
    return Tracklet(track["id"], entries, direction, track["score"], 1)


def plain_frames(t):
    return {
        f: (d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.score, d.category_id)
        for f, d in t.entries.items()
    }
