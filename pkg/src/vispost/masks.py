"""Run-length mask codec, box and mask IoU, and mask averaging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from .types import BoundingBox, DimensionError, MaskFormatError, RleMask


@dataclass(frozen=True, eq=False)
class SoftMask:
    """Dense real-valued mask in [0, 1], e.g. a per-pixel model probability."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise DimensionError(f"values shape {values.shape} != ({self.height}, {self.width})")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("soft mask values must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def rle_encode(grid) -> RleMask:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise DimensionError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = grid.astype(bool).ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return RleMask(grid.shape[0], grid.shape[1], tuple(runs.tolist()))


def rle_decode(m: RleMask) -> np.ndarray:
    """Dense boolean array of shape (height, width)."""
    runs = np.asarray(m.runs, dtype=np.int64)
    if runs.sum() != m.height * m.width:
        raise MaskFormatError(f"run lengths sum to {runs.sum()}, expected {m.height * m.width}")
    values = np.arange(runs.size) % 2 == 1
    flat = np.repeat(values, runs)
    return flat.reshape((m.height, m.width), order="F")


def empty_mask(height: int, width: int) -> RleMask:
    return RleMask(height, width, (height * width,))


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def _boundaries(m: RleMask) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(np.asarray(m.runs, dtype=np.int64))))


def _check_same_size(a: RleMask, b: RleMask):
    if a.size != b.size:
        raise DimensionError(f"mask sizes differ: {a.size} vs {b.size}")


def mask_intersection_area(a: RleMask, b: RleMask) -> int:
    """Foreground overlap computed from the run lists alone."""
    _check_same_size(a, b)
    ca, cb = _boundaries(a), _boundaries(b)
    points = np.union1d(ca, cb)
    starts, lengths = points[:-1], np.diff(points)
    # a position lies in run j where bounds[j] <= p < bounds[j+1]; odd j is foreground
    in_a = (np.searchsorted(ca, starts, side="right") - 1) % 2 == 1
    in_b = (np.searchsorted(cb, starts, side="right") - 1) % 2 == 1
    return int(lengths[in_a & in_b].sum())


def mask_iou(a: RleMask, b: RleMask) -> float:
    inter = mask_intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def average_masks(masks: Sequence[Union[SoftMask, RleMask]], threshold: float = 0.5) -> RleMask:
    """Per-pixel mean of the inputs, binarized with a strict ``> threshold``."""
    if not masks:
        raise ValueError("average_masks needs at least one mask")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    shape = (masks[0].height, masks[0].width)
    total = np.zeros(shape, dtype=np.float64)
    for m in masks:
        if (m.height, m.width) != shape:
            raise DimensionError(f"mask sizes differ: {(m.height, m.width)} vs {shape}")
        total += m.values if isinstance(m, SoftMask) else rle_decode(m)
    return rle_encode(total / len(masks) > threshold)


def mask_to_box(m: RleMask) -> BoundingBox:
    grid = rle_decode(m)
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    if rows.size == 0:
        raise ValueError("cannot take the bounding box of an empty mask")
    return BoundingBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def resize_mask_nearest(m: RleMask, height: int, width: int) -> RleMask:
    """Nearest-neighbour resample to a new grid size (pixel-centre sampling)."""
    if m.size == (height, width):
        return m
    grid = rle_decode(m)
    rows = np.minimum(((np.arange(height) + 0.5) * m.height / height).astype(np.int64), m.height - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * m.width / width).astype(np.int64), m.width - 1)
    return rle_encode(grid[np.ix_(rows, cols)])


# -- serialization ---------------------------------------------------------


def _counts_from_string(s: str) -> List[int]:
    # COCO compressed counts: 5 bits per char, delta-coded against counts[i-2]
    counts: List[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def counts_to_string(counts: Sequence[int]) -> str:
    out = []
    for i, x in enumerate(counts):
        x = int(x)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = x != -1 if c & 0x10 else x != 0
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def rle_from_dict(obj: Dict) -> RleMask:
    """Parse ``{size: [h, w], counts: [...] | str}``."""
    try:
        h, w = obj["size"]
        counts = obj["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MaskFormatError(f"malformed RLE object: {obj!r}") from exc
    if isinstance(counts, str):
        counts = _counts_from_string(counts)
    if isinstance(counts, (bytes, bytearray)):
        counts = _counts_from_string(counts.decode("ascii"))
    try:
        counts = [int(c) for c in counts]
    except (TypeError, ValueError) as exc:
        raise MaskFormatError(f"non-integer RLE counts: {counts!r}") from exc
    # COCO writers sometimes emit zero-length interior runs; fold them away
    runs: List[int] = counts[:1]
    i = 1
    while i < len(counts):
        if counts[i] == 0 and i + 1 < len(counts):
            runs[-1] += counts[i + 1]
            i += 2
            continue
        if counts[i] == 0:
            break
        runs.append(counts[i])
        i += 1
    return RleMask(int(h), int(w), tuple(runs))


def rle_to_dict(m: RleMask) -> Dict:
    return {"size": [m.height, m.width], "counts": list(m.runs)}

