"""Annotation-level data analysis and augmentation.

* how much objects move between adjacent frames (IoU histogram),
* uniform frame subsampling of a dataset,
* synthetic tracking pairs from a single annotated frame via a
  flip / rotate / shift transform.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .masks import box_iou, mask_to_box, rle_decode, rle_encode
from .types import BoundingBox, GroundTruthDataset, GTInstance, RleMask


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        rows = ["bin_left,bin_right,count"]
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            rows.append(f"{lo:.6g},{hi:.6g},{int(n)}")
        return "\n".join(rows) + "\n"


def _adjacent_ious(inst: GTInstance) -> List[float]:
    out = []
    for a, b in zip(inst.boxes, inst.boxes[1:]):
        if a is not None and b is not None:
            out.append(box_iou(a, b))
    return out


def adjacent_iou_values(gt: GroundTruthDataset, mode: str = "video") -> List[float]:
    """Mean adjacent-frame box IoU per video (``mode="video"``) or per
    instance (``mode="object"``). Units without any adjacent pair are skipped."""
    if mode not in ("video", "object"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    values = []
    if mode == "object":
        for inst in gt.instances:
            ious = _adjacent_ious(inst)
            if ious:
                values.append(sum(ious) / len(ious))
        return values
    for video in gt.videos:
        ious = [iou for inst in gt.instances_of(video.id) for iou in _adjacent_ious(inst)]
        if ious:
            values.append(sum(ious) / len(ious))
    return values


def adjacent_iou_histogram(gt: GroundTruthDataset, bins: int = 20, mode: str = "video") -> Histogram:
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    # numpy closes the last bin on the right, so IoU 1.0 lands in the top bin
    counts, edges = np.histogram(adjacent_iou_values(gt, mode), bins=bins, range=(0.0, 1.0))
    return Histogram(edges, counts)


def subsample_indices(length: int, k: int) -> List[int]:
    """k frame indices spread evenly over [0, length-1], rounding half up."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= length:
        return list(range(length))
    if k == 1:
        return [length // 2]
    return [math.floor(j * (length - 1) / (k - 1) + 0.5) for j in range(k)]


def subsample_frames(gt: GroundTruthDataset, k: int) -> GroundTruthDataset:
    """Keep ``k`` evenly spaced frames per video. Instances left with no
    annotation in the kept frames are dropped."""
    videos, instances = [], []
    keep = {}
    for video in gt.videos:
        idx = subsample_indices(video.length, k)
        keep[video.id] = idx
        names = tuple(video.file_names[i] for i in idx) if video.file_names else ()
        videos.append(dataclasses.replace(video, length=len(idx), file_names=names))
    for inst in gt.instances:
        idx = keep.get(inst.video_id)
        if idx is None:
            instances.append(inst)
            continue
        segs = tuple(inst.segmentations[i] if i < len(inst.segmentations) else None for i in idx)
        boxes = tuple(inst.boxes[i] if i < len(inst.boxes) else None for i in idx)
        if all(s is None for s in segs) and all(b is None for b in boxes):
            continue
        instances.append(dataclasses.replace(inst, segmentations=segs, boxes=boxes))
    return GroundTruthDataset(tuple(videos), gt.categories, tuple(instances))


# -- synthetic tracking pairs ------------------------------------------------


@dataclass(frozen=True)
class AffineParams:
    """Flip, then rotate about the image centre (degrees, counter-clockwise
    as displayed), then shift by (dx, dy) pixels."""

    dx: float = 0.0
    dy: float = 0.0
    rotation: float = 0.0
    flip: bool = False

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.rotation)):
            raise ValueError("affine parameters must be finite")
        if not -180.0 <= self.rotation <= 180.0:
            raise ValueError(f"rotation {self.rotation} outside [-180, 180]")

    @classmethod
    def sample(cls, rng: np.random.Generator, max_shift: float, max_rotation: float, flip_prob: float = 0.5):
        return cls(
            dx=float(rng.uniform(-max_shift, max_shift)),
            dy=float(rng.uniform(-max_shift, max_shift)),
            rotation=float(rng.uniform(-max_rotation, max_rotation)),
            flip=bool(rng.random() < flip_prob),
        )

    def matrix(self, width: int, height: int) -> np.ndarray:
        """3x3 homogeneous map from source to destination continuous coords."""
        flip = np.eye(3)
        if self.flip:
            flip = np.array([[-1.0, 0.0, width], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        th = math.radians(self.rotation)
        c, s = math.cos(th), math.sin(th)
        cx, cy = width / 2.0, height / 2.0
        # y grows downwards, so a visually counter-clockwise turn uses +s on x
        rot = np.array([[c, s, cx - c * cx - s * cy], [-s, c, cy + s * cx - c * cy], [0.0, 0.0, 1.0]])
        shift = np.array([[1.0, 0.0, self.dx], [0.0, 1.0, self.dy], [0.0, 0.0, 1.0]])
        return shift @ rot @ flip


@dataclass(frozen=True)
class FrameObject:
    box: BoundingBox
    category_id: int
    mask: Optional[RleMask] = None
    track_id: Optional[int] = None


def _transform_mask(m: RleMask, inv: np.ndarray) -> RleMask:
    src = rle_decode(m)
    h, w = m.size
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5, np.ones(h * w)])
    sx, sy, _ = inv @ pts
    ix, iy = np.floor(sx).astype(np.int64), np.floor(sy).astype(np.int64)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros(h * w, dtype=bool)
    out[inside] = src[iy[inside], ix[inside]]
    return rle_encode(out.reshape(h, w))


def _transform_box(b: BoundingBox, fwd: np.ndarray, width: int, height: int) -> BoundingBox:
    corners = np.array([[b.x1, b.x2, b.x1, b.x2], [b.y1, b.y1, b.y2, b.y2], [1.0, 1.0, 1.0, 1.0]])
    x, y, _ = fwd @ corners
    x1, x2 = np.clip([x.min(), x.max()], 0.0, width)
    y1, y2 = np.clip([y.min(), y.max()], 0.0, height)
    return BoundingBox(float(x1), float(y1), float(x2), float(y2))


def synth_pair(
    objects: Sequence[FrameObject],
    a: AffineParams,
    image_size: Tuple[int, int],
    start_id: int = 1,
) -> Tuple[List[FrameObject], List[FrameObject]]:
    """Return (key, reference) object lists for a pseudo frame pair.

    ``image_size`` is (height, width). Objects whose transformed, clipped
    extent covers less than one pixel are dropped from both sides; the
    survivors get matching track ids ``start_id, start_id + 1, ...``.
    """
    height, width = image_size
    fwd = a.matrix(width, height)
    inv = np.linalg.inv(fwd)
    key, ref = [], []
    next_id = start_id
    for obj in objects:
        if obj.mask is not None:
            mask = _transform_mask(obj.mask, inv)
            if mask.area < 1:
                continue
            box = mask_to_box(mask)
        else:
            mask = None
            box = _transform_box(obj.box, fwd, width, height)
            if box.area < 1.0:
                continue
        key.append(dataclasses.replace(obj, track_id=next_id))
        ref.append(FrameObject(box, obj.category_id, mask, next_id))
        next_id += 1
    return key, ref
