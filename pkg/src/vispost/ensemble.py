"""Merging detections from several models or test scales.

Boxes are clustered greedily in descending score order. A cluster keeps the
score of its best member (max, never an average) so the merged confidence
stays on the scale of a single model's output.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .masks import average_masks, box_iou, resize_mask_nearest
from .types import BoundingBox, DimensionError, Detection


@dataclass(frozen=True)
class EnsembleParams:
    cluster_iou: float = 0.6
    same_category_only: bool = True
    mask_bin_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.cluster_iou < 1.0:
            raise ValueError(f"cluster_iou {self.cluster_iou} outside (0, 1)")
        if not 0.0 < self.mask_bin_threshold < 1.0:
            raise ValueError(f"mask_bin_threshold {self.mask_bin_threshold} outside (0, 1)")


def _weighted_box(members: Sequence[Detection]) -> BoundingBox:
    rep = members[0]
    if len(members) == 1:
        return rep.box
    # offsets from the representative keep the mean of identical boxes exact
    base = np.array(rep.box.as_list())
    coords = np.array([m.box.as_list() for m in members]) - base
    weights = np.array([m.score for m in members])
    if weights.sum() == 0.0:
        weights = np.ones_like(weights)
    mean = base + (weights[:, None] * coords).sum(axis=0) / weights.sum()
    x1, y1, x2, y2 = (float(v) for v in mean)
    return BoundingBox(x1, y1, max(x1, x2), max(y1, y2))


def cluster_detections(
    per_model: Sequence[Sequence[Detection]], p: EnsembleParams
) -> List[List[Detection]]:
    """Clusters of pooled detections; each cluster lists its representative
    (highest score) first.

    A cluster takes at most one detection per model, so a single model's
    output is never fused with itself.
    """
    pooled = [
        (-det.score, m, k, det) for m, dets in enumerate(per_model) for k, det in enumerate(dets)
    ]
    pooled.sort(key=lambda item: item[:3])
    clusters: List[List[Detection]] = []
    sources: List[set] = []
    for _, m, _, det in pooled:
        for members, models in zip(clusters, sources):
            rep = members[0]
            if m in models or (p.same_category_only and rep.category_id != det.category_id):
                continue
            if box_iou(rep.box, det.box) > p.cluster_iou:
                members.append(det)
                models.add(m)
                break
        else:
            clusters.append([det])
            sources.append({m})
    return clusters


def greedy_ensemble_boxes(
    per_model: Sequence[Sequence[Detection]], p: EnsembleParams = EnsembleParams()
) -> List[Detection]:
    """One output detection per cluster: score-weighted mean box, max score,
    representative's category (and its mask/embedding, if any)."""
    out = []
    for members in cluster_detections(per_model, p):
        rep = members[0]
        if len(members) == 1:
            out.append(rep)
        else:
            out.append(dataclasses.replace(rep, box=_weighted_box(members), score=max(m.score for m in members)))
    return out


def ensemble_masks_embeddings(
    proposal: Detection,
    masks: Sequence,
    embeddings: Sequence,
    p: EnsembleParams = EnsembleParams(),
) -> Detection:
    """Attach the averaged mask and the mean embedding of several models'
    outputs for one proposal; box, score and category are left alone."""
    mask = proposal.mask
    if masks:
        mask = average_masks(list(masks), p.mask_bin_threshold)
    embedding = proposal.embedding
    if embeddings:
        vecs = [np.asarray(e, dtype=np.float64) for e in embeddings]
        if len({v.shape for v in vecs}) != 1:
            raise DimensionError(f"embedding dimensions differ: {sorted({v.shape for v in vecs})}")
        stack = np.stack(vecs)
        mean = stack[0] + (stack - stack[0]).mean(axis=0)
        embedding = tuple(float(v) for v in mean)
    return dataclasses.replace(proposal, mask=mask, embedding=embedding)


def ensemble_frame(
    per_model: Sequence[Sequence[Detection]], p: EnsembleParams = EnsembleParams()
) -> List[Detection]:
    """Boxes fused as in :func:`greedy_ensemble_boxes`; masks and embeddings
    averaged over the cluster members that carry them."""
    out = []
    for members in cluster_detections(per_model, p):
        rep = members[0]
        if len(members) == 1:
            out.append(rep)
            continue
        fused = dataclasses.replace(
            rep, box=_weighted_box(members), score=max(m.score for m in members)
        )
        masks = [m.mask for m in members if m.mask is not None]
        embeddings = [m.embedding for m in members if m.embedding is not None]
        out.append(ensemble_masks_embeddings(fused, masks, embeddings, p))
    return out


def rescale_detection(det: Detection, scale: float, size: Optional[Tuple[int, int]] = None) -> Detection:
    """Map a detection made on an image resized by ``scale`` back to native
    coordinates; masks are resampled to ``size`` (height, width) if given."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if scale == 1.0 and (det.mask is None or size is None or det.mask.size == tuple(size)):
        return det
    b = det.box
    box = BoundingBox(b.x1 / scale, b.y1 / scale, b.x2 / scale, b.y2 / scale)
    mask = det.mask
    if mask is not None:
        h, w = size if size is not None else (round(mask.height / scale), round(mask.width / scale))
        mask = resize_mask_nearest(mask, h, w)
    return dataclasses.replace(det, box=box, mask=mask)


def ensemble_video(
    per_model: Sequence[Sequence[Detection]], p: EnsembleParams = EnsembleParams()
) -> List[Detection]:
    """Frame-by-frame :func:`ensemble_frame` over whole-video detection lists."""
    frames: Dict[int, List[List[Detection]]] = {}
    for m, dets in enumerate(per_model):
        for det in dets:
            frames.setdefault(det.frame_index, [[] for _ in per_model])[m].append(det)
    out: List[Detection] = []
    for t in sorted(frames):
        out.extend(ensemble_frame(frames[t], p))
    return out
