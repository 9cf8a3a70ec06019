"""Video instance segmentation metrics: mAP, AP50, AP75, AR@1, AR@10.

Predictions and ground-truth instances are whole-video tracks and are
compared with spatio-temporal mask IoU. Per category and IoU threshold the
predictions are matched greedily in descending score order, and AP is the
101-point interpolated area under the precision/recall curve.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .masks import mask_intersection_area
from .types import DimensionError, GroundTruthDataset, RleMask

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_THRESHOLDS = tuple(i / 100 for i in range(101))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: Tuple[float, ...] = IOU_THRESHOLDS
    max_dets: Tuple[int, ...] = (1, 10, 100)
    category_ids: Optional[Tuple[int, ...]] = None
    # "video_category": at most k predictions per (video, category), the
    # COCO-style cap; "video": at most k per video over all categories
    max_dets_scope: str = "video_category"

    def __post_init__(self):
        thr = tuple(float(t) for t in self.iou_thresholds)
        if not thr or any(not 0.0 < t < 1.0 for t in thr):
            raise ValueError(f"IoU thresholds must lie in (0, 1): {thr}")
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError(f"IoU thresholds must be strictly increasing: {thr}")
        object.__setattr__(self, "iou_thresholds", thr)
        dets = tuple(sorted(int(k) for k in self.max_dets))
        if not dets or dets[0] < 1:
            raise ValueError(f"max_dets must be positive: {self.max_dets}")
        object.__setattr__(self, "max_dets", dets)
        if self.category_ids is not None:
            object.__setattr__(self, "category_ids", tuple(self.category_ids))
        if self.max_dets_scope not in ("video", "video_category"):
            raise ValueError(f"unknown max_dets_scope {self.max_dets_scope!r}")


@dataclass(frozen=True)
class PredictionRecord:
    video_id: int
    category_id: int
    score: float
    segmentations: Tuple[Optional[RleMask], ...]

    def __post_init__(self):
        object.__setattr__(self, "segmentations", tuple(self.segmentations))


@dataclass(frozen=True)
class EvalResult:
    map: float
    ap50: float
    ap75: float
    ar1: float
    ar10: float
    ap_per_threshold: Tuple[float, ...] = ()
    ar_per_max_dets: Dict[int, float] = field(default_factory=dict)
    per_category: Dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "mAP": self.map,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "AR1": self.ar1,
            "AR10": self.ar10,
            "AP_per_threshold": list(self.ap_per_threshold),
            "AR_per_max_dets": {str(k): v for k, v in self.ar_per_max_dets.items()},
            "per_category_AP": {str(k): v for k, v in self.per_category.items()},
        }


def _areas(masks: Sequence[Optional[RleMask]]) -> List[int]:
    return [0 if m is None else m.area for m in masks]


def st_iou(pred: Sequence[Optional[RleMask]], gt: Sequence[Optional[RleMask]]) -> float:
    """Summed per-frame intersections over summed per-frame unions; a
    missing mask counts as empty."""
    inter = union = 0
    for p, g in itertools.zip_longest(pred, gt):
        if p is not None and g is not None:
            if p.size != g.size:
                raise DimensionError(f"mask sizes differ: {p.size} vs {g.size}")
            i = mask_intersection_area(p, g)
            inter += i
            union += p.area + g.area - i
        elif p is not None:
            union += p.area
        elif g is not None:
            union += g.area
    return inter / union if union else 0.0


def _greedy_match(ious: np.ndarray, thr: float) -> np.ndarray:
    """Rows are predictions in score order; returns a TP flag per row."""
    n_pred, n_gt = ious.shape
    taken = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(n_pred, dtype=bool)
    for i in range(n_pred):
        best, best_j = -1.0, -1
        for j in range(n_gt):
            if not taken[j] and ious[i, j] >= thr and ious[i, j] > best:
                best, best_j = ious[i, j], j
        if best_j >= 0:
            taken[best_j] = True
            tp[i] = True
    return tp


def interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP for TP flags sorted by descending score."""
    if len(tp) == 0:
        return 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / n_gt
    precision = tps / (tps + fps)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_THRESHOLDS, side="left")
    q = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(q.mean())


def _check_references(predictions: Sequence[PredictionRecord], gt: GroundTruthDataset):
    videos = {v.id: v for v in gt.videos}
    categories = {c.id for c in gt.categories}
    for n, p in enumerate(predictions):
        video = videos.get(p.video_id)
        if video is None:
            raise ValueError(f"prediction {n}: unknown video id {p.video_id}")
        if p.category_id not in categories:
            raise ValueError(f"prediction {n}: unknown category id {p.category_id}")
        if len(p.segmentations) != video.length:
            raise ValueError(
                f"prediction {n}: {len(p.segmentations)} segmentations for a {video.length}-frame video"
            )
        for m in p.segmentations:
            if m is not None and m.size != (video.height, video.width):
                raise DimensionError(
                    f"prediction {n}: mask {m.size} in a {video.height}x{video.width} video"
                )


def evaluate(
    predictions: Sequence[PredictionRecord],
    gt: GroundTruthDataset,
    cfg: EvalConfig = EvalConfig(),
) -> EvalResult:
    _check_references(predictions, gt)
    cat_ids = cfg.category_ids if cfg.category_ids is not None else tuple(sorted(c.id for c in gt.categories))
    gt_by_key: Dict[tuple, list] = {}
    for inst in gt.instances:
        if inst.category_id in cat_ids:
            gt_by_key.setdefault((inst.video_id, inst.category_id), []).append(inst)
    n_gt = {c: sum(len(v) for (_, kc), v in gt_by_key.items() if kc == c) for c in cat_ids}
    eval_cats = [c for c in cat_ids if n_gt[c] > 0]
    if not eval_cats:
        raise ValueError("no ground-truth instances in the evaluated categories")

    # global order: descending score, ties by input position
    order = sorted(
        (n for n, p in enumerate(predictions) if p.category_id in eval_cats),
        key=lambda n: (-predictions[n].score, n),
    )
    rank = {}
    seen: Dict[tuple, int] = {}
    for n in order:
        p = predictions[n]
        scope = p.video_id if cfg.max_dets_scope == "video" else (p.video_id, p.category_id)
        rank[n] = seen.get(scope, 0)
        seen[scope] = rank[n] + 1
    max_k = cfg.max_dets[-1]
    kept = [n for n in order if rank[n] < max_k]

    thresholds = cfg.iou_thresholds
    # per category: list of (prediction index, TP flag per threshold)
    flags: Dict[int, List[Tuple[int, np.ndarray]]] = {c: [] for c in eval_cats}
    by_key: Dict[tuple, List[int]] = {}
    for n in kept:
        p = predictions[n]
        by_key.setdefault((p.video_id, p.category_id), []).append(n)
    for key, preds in by_key.items():
        gts = gt_by_key.get(key, [])
        ious = np.array(
            [[st_iou(predictions[n].segmentations, g.segmentations) for g in gts] for n in preds]
        ).reshape(len(preds), len(gts))
        tp = np.stack([_greedy_match(ious, t) for t in thresholds], axis=1)
        flags[key[1]].extend(zip(preds, tp))

    ap = np.zeros((len(thresholds), len(eval_cats)))
    recall = {k: np.zeros((len(thresholds), len(eval_cats))) for k in cfg.max_dets}
    for ci, c in enumerate(eval_cats):
        items = sorted(flags[c], key=lambda item: (-predictions[item[0]].score, item[0]))
        idx = np.array([n for n, _ in items], dtype=np.int64)
        tp = np.array([f for _, f in items], dtype=bool).reshape(len(items), len(thresholds))
        for ti in range(len(thresholds)):
            ap[ti, ci] = interpolated_ap(tp[:, ti], n_gt[c])
            for k in cfg.max_dets:
                within = np.array([rank[n] < k for n in idx], dtype=bool)
                recall[k][ti, ci] = tp[within, ti].sum() / n_gt[c] if len(idx) else 0.0

    def at(t):
        return float(ap[thresholds.index(t)].mean()) if t in thresholds else float("nan")

    ar = {k: float(v.mean()) for k, v in recall.items()}
    return EvalResult(
        map=float(ap.mean()),
        ap50=at(0.5),
        ap75=at(0.75),
        ar1=ar.get(1, float("nan")),
        ar10=ar.get(10, float("nan")),
        ap_per_threshold=tuple(float(v) for v in ap.mean(axis=1)),
        ar_per_max_dets=ar,
        per_category={c: float(ap[:, ci].mean()) for ci, c in enumerate(eval_cats)},
    )


def format_report(result: EvalResult) -> str:
    lines = [
        f"{'mAP':>6} {'AP50':>6} {'AP75':>6} {'AR1':>6} {'AR10':>6}",
        f"{result.map:6.3f} {result.ap50:6.3f} {result.ap75:6.3f} {result.ar1:6.3f} {result.ar10:6.3f}",
    ]
    if result.per_category:
        lines.append("")
        lines.append("category        AP")
        for cid, value in sorted(result.per_category.items()):
            lines.append(f"{cid:>8} {value:9.3f}")
    return "\n".join(lines)
