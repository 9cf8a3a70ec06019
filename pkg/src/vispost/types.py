"""Domain model shared by every stage of the pipeline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple


class MaskFormatError(ValueError):
    """Run-length data that does not describe a valid mask."""


class DimensionError(ValueError):
    """Operands whose spatial or vector dimensions disagree."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates, corner form."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order {coords}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(x, y, x + w, y + h)

    def to_xywh(self) -> List[float]:
        return [self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1]

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class RleMask:
    """Binary mask as column-major run lengths.

    ``runs[0]`` counts background pixels (possibly zero), then runs alternate
    between foreground and background.
    """

    height: int
    width: int
    runs: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.height <= 0 or self.width <= 0:
            raise DimensionError(f"mask dimensions must be positive, got {self.height}x{self.width}")
        if any(r < 0 for r in self.runs):
            raise MaskFormatError("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MaskFormatError("zero-length run after the leading background run")
        total = sum(self.runs)
        if total != self.height * self.width:
            raise MaskFormatError(
                f"run lengths sum to {total}, expected {self.height * self.width}"
            )

    @property
    def size(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return sum(self.runs[1::2])


class Direction(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    MERGED = "merged"


@dataclass(frozen=True)
class Detection:
    """One object hypothesis in one frame."""

    frame_index: int
    box: BoundingBox
    score: float
    category_id: int
    mask: Optional[RleMask] = None
    mask_score: Optional[float] = None
    embedding: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"negative frame index {self.frame_index}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.category_id < 1:
            raise ValueError(f"category id must be positive, got {self.category_id}")
        if self.mask_score is not None and not 0.0 <= self.mask_score <= 1.0:
            raise ValueError(f"mask score {self.mask_score} outside [0, 1]")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(v) for v in self.embedding))


@dataclass(frozen=True)
class Tracklet:
    """A single identity: detections keyed by frame, in increasing frame order."""

    track_id: int
    entries: Mapping[int, Detection]
    direction: Direction
    track_score: float
    track_category: int

    def __post_init__(self):
        if not self.entries:
            raise ValueError(f"tracklet {self.track_id} has no entries")
        ordered: Dict[int, Detection] = {}
        for frame in sorted(self.entries):
            det = self.entries[frame]
            if det.frame_index != frame:
                raise ValueError(
                    f"tracklet {self.track_id}: entry keyed {frame} holds frame {det.frame_index}"
                )
            ordered[frame] = det
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "direction", Direction(self.direction))

    @classmethod
    def from_detections(
        cls,
        track_id: int,
        detections: Iterable[Detection],
        direction: Direction,
    ) -> "Tracklet":
        """Build a tracklet whose score is the mean detection score and whose
        category is the voted label."""
        from .postproc import vote_label

        entries: Dict[int, Detection] = {}
        for det in detections:
            if det.frame_index in entries:
                raise ValueError(f"tracklet {track_id}: two detections in frame {det.frame_index}")
            entries[det.frame_index] = det
        if not entries:
            raise ValueError(f"tracklet {track_id} has no entries")
        score = sum(d.score for d in entries.values()) / len(entries)
        draft = cls(track_id, entries, direction, score, 1)
        return cls(track_id, entries, direction, score, vote_label(draft))

    @property
    def frames(self) -> List[int]:
        return list(self.entries)

    def detections(self) -> List[Detection]:
        return list(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TrackSet:
    """All tracklets of one video produced by one association pass."""

    video_id: int
    video_length: int
    tracklets: Tuple[Tracklet, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tracklets", tuple(self.tracklets))
        ids = [t.track_id for t in self.tracklets]
        if len(set(ids)) != len(ids):
            raise ValueError(f"video {self.video_id}: duplicate track ids")
        for t in self.tracklets:
            frames = t.frames
            if frames[0] < 0 or frames[-1] >= self.video_length:
                raise ValueError(
                    f"video {self.video_id}: track {t.track_id} has frames outside [0, {self.video_length})"
                )


@dataclass(frozen=True)
class VideoInfo:
    id: int
    width: int
    height: int
    length: int
    file_names: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "file_names", tuple(self.file_names))


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class GTInstance:
    """Ground-truth track: one optional mask and one optional box per frame."""

    id: int
    video_id: int
    category_id: int
    segmentations: Tuple[Optional[RleMask], ...]
    boxes: Tuple[Optional[BoundingBox], ...]

    def __post_init__(self):
        object.__setattr__(self, "segmentations", tuple(self.segmentations))
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class GroundTruthDataset:
    """Annotation set. Not validated on construction; see :func:`validate_dataset`."""

    videos: Tuple[VideoInfo, ...]
    categories: Tuple[Category, ...]
    instances: Tuple[GTInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "instances", tuple(self.instances))

    def video(self, video_id: int) -> VideoInfo:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(f"unknown video id {video_id}")

    def instances_of(self, video_id: int) -> List[GTInstance]:
        return [inst for inst in self.instances if inst.video_id == video_id]


@dataclass(frozen=True)
class Violation:
    entity: str
    entity_id: object
    rule: str

    def __str__(self) -> str:
        return f"{self.entity} {self.entity_id}: {self.rule}"


def validate_dataset(ds: GroundTruthDataset) -> List[Violation]:
    """Check referential and shape invariants; an empty list means valid."""
    out: List[Violation] = []
    videos = {}
    for v in ds.videos:
        if v.id in videos:
            out.append(Violation("video", v.id, "duplicate video id"))
        videos[v.id] = v
        if v.width <= 0 or v.height <= 0 or v.length <= 0:
            out.append(Violation("video", v.id, "non-positive width, height or length"))
        if v.file_names and len(v.file_names) != v.length:
            out.append(Violation("video", v.id, "file name count differs from video length"))

    category_ids = set()
    for c in ds.categories:
        if c.id in category_ids:
            out.append(Violation("category", c.id, "duplicate category id"))
        category_ids.add(c.id)

    seen_instances = set()
    for inst in ds.instances:
        if inst.id in seen_instances:
            out.append(Violation("instance", inst.id, "duplicate instance id"))
        seen_instances.add(inst.id)
        if inst.category_id not in category_ids:
            out.append(Violation("instance", inst.id, f"unknown category id {inst.category_id}"))
        video = videos.get(inst.video_id)
        if video is None:
            out.append(Violation("instance", inst.id, f"unknown video id {inst.video_id}"))
            continue
        if len(inst.segmentations) != video.length:
            out.append(
                Violation(
                    "instance",
                    inst.id,
                    f"segmentation list has {len(inst.segmentations)} entries, video has {video.length} frames",
                )
            )
        if len(inst.boxes) != video.length:
            out.append(
                Violation(
                    "instance",
                    inst.id,
                    f"box list has {len(inst.boxes)} entries, video has {video.length} frames",
                )
            )
        for t, m in enumerate(inst.segmentations):
            if m is not None and m.size != (video.height, video.width):
                out.append(
                    Violation("instance", inst.id, f"frame {t} mask is {m.height}x{m.width}, video is {video.height}x{video.width}")
                )
    return out


def frames_by_index(detections: Sequence[Detection], length: int) -> List[List[Detection]]:
    """Group detections of one video into per-frame lists of size ``length``."""
    frames: List[List[Detection]] = [[] for _ in range(length)]
    for det in detections:
        if det.frame_index >= length:
            raise ValueError(f"detection frame {det.frame_index} beyond video length {length}")
        frames[det.frame_index].append(det)
    return frames
