"""Post-detector toolkit for video instance segmentation.

Tracking-by-detection in both temporal directions, bidirectional tracklet
merging, label voting, detection ensembling, auxiliary-class label fusion,
annotation redundancy analysis and the VIS metric suite.
"""

from .bitrack import BiTrackParams, bitrack_merge, is_overlap, merge
from .ensemble import EnsembleParams, ensemble_masks_embeddings, greedy_ensemble_boxes
from .evaluation import EvalConfig, EvalResult, PredictionRecord, evaluate, st_iou
from .fusion import FusionConfig, fuse_labels, map_auxiliary
from .masks import SoftMask, average_masks, box_iou, mask_iou, mask_to_box, rle_decode, rle_encode
from .postproc import calibrate_score, filter_trackable, vote_label
from .tracker import TrackBuffer, TrackerParams, associate_frame, embed_similarity, track_video
from .types import (
    BoundingBox,
    Category,
    Detection,
    Direction,
    GroundTruthDataset,
    GTInstance,
    RleMask,
    TrackSet,
    Tracklet,
    VideoInfo,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "associate_frame",
    "average_masks",
    "bitrack_merge",
    "BiTrackParams",
    "BoundingBox",
    "box_iou",
    "calibrate_score",
    "Category",
    "Detection",
    "Direction",
    "embed_similarity",
    "ensemble_masks_embeddings",
    "EnsembleParams",
    "EvalConfig",
    "EvalResult",
    "evaluate",
    "filter_trackable",
    "fuse_labels",
    "FusionConfig",
    "greedy_ensemble_boxes",
    "GroundTruthDataset",
    "GTInstance",
    "is_overlap",
    "map_auxiliary",
    "mask_iou",
    "mask_to_box",
    "merge",
    "PredictionRecord",
    "rle_decode",
    "rle_encode",
    "RleMask",
    "SoftMask",
    "st_iou",
    "track_video",
    "TrackBuffer",
    "TrackerParams",
    "Tracklet",
    "TrackSet",
    "validate_dataset",
    "VideoInfo",
    "vote_label",
]
