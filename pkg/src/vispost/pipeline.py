"""End-to-end run: ensemble -> forward/backward tracking -> merge ->
label voting and score calibration -> results (-> metrics).

Videos are independent work units; with ``workers > 1`` they are spread over
a process pool, and results are always collected in video-id order.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .bitrack import bitrack_merge
from .config import PipelineConfig
from .ensemble import ensemble_video
from .evaluation import EvalResult, PredictionRecord, evaluate
from .io import tracksets_to_results
from .postproc import calibrate_tracklet, relabel
from .tracker import track_video
from .types import Detection, Direction, GroundTruthDataset, TrackSet, frames_by_index


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception, video_id: Optional[int] = None):
        self.stage = stage
        self.video_id = video_id
        where = f" (video {video_id})" if video_id is not None else ""
        super().__init__(f"stage '{stage}'{where} failed: {cause}")


@dataclass(frozen=True)
class VideoTask:
    video_id: int
    length: int
    per_model: Tuple[Tuple[Detection, ...], ...]


@dataclass(frozen=True)
class PipelineOutput:
    tracksets: Tuple[TrackSet, ...]
    results: Tuple[PredictionRecord, ...]
    metrics: Optional[EvalResult] = None


def postprocess(ts: TrackSet) -> TrackSet:
    tracklets = tuple(calibrate_tracklet(relabel(t)) for t in ts.tracklets)
    return dataclasses.replace(ts, tracklets=tracklets)


def process_video(task: VideoTask, cfg: PipelineConfig) -> TrackSet:
    stage = "ensemble"
    try:
        if len(task.per_model) > 1:
            dets = ensemble_video(task.per_model, cfg.ensemble)
        else:
            dets = list(task.per_model[0]) if task.per_model else []
        frames = frames_by_index(dets, task.length)

        stage = "track"
        forward = track_video(frames, cfg.tracker, Direction.FORWARD, task.video_id)
        if cfg.use_bitrack:
            backward = track_video(frames, cfg.tracker, Direction.BACKWARD, task.video_id)
            stage = "bitrack"
            tracks = bitrack_merge(forward, backward, cfg.bitrack)
        else:
            tracks = forward

        stage = "postprocess"
        return postprocess(tracks)
    except Exception as exc:
        raise PipelineError(stage, exc, task.video_id) from exc


def _run_task(args):
    return process_video(*args)


def build_tasks(
    per_model: Sequence[Dict[int, Sequence[Detection]]],
    lengths: Dict[int, int],
) -> List[VideoTask]:
    """One task per video in ``lengths``; ``per_model`` holds each model's
    detections keyed by video id."""
    tasks = []
    for vid in sorted(lengths):
        dets = tuple(tuple(model.get(vid, ())) for model in per_model)
        tasks.append(VideoTask(vid, lengths[vid], dets))
    return tasks


def infer_lengths(per_model: Sequence[Dict[int, Sequence[Detection]]]) -> Dict[int, int]:
    lengths: Dict[int, int] = {}
    for model in per_model:
        for vid, dets in model.items():
            top = max((d.frame_index for d in dets), default=-1) + 1
            lengths[vid] = max(lengths.get(vid, 0), top)
    return lengths


def run_pipeline(
    per_model: Sequence[Dict[int, Sequence[Detection]]],
    cfg: PipelineConfig,
    gt: Optional[GroundTruthDataset] = None,
) -> PipelineOutput:
    if gt is not None:
        lengths = {v.id: v.length for v in gt.videos}
        unknown = set().union(*(m.keys() for m in per_model)) - set(lengths) if per_model else set()
        if unknown:
            raise PipelineError("ingest", ValueError(f"detections for unknown videos {sorted(unknown)}"))
    else:
        lengths = infer_lengths(per_model)
    tasks = build_tasks(per_model, lengths)

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            tracksets = list(pool.map(_run_task, [(t, cfg) for t in tasks]))
    else:
        tracksets = [process_video(t, cfg) for t in tasks]

    results = tuple(tracksets_to_results(tracksets))
    metrics = None
    if gt is not None:
        try:
            metrics = evaluate(results, gt, cfg.eval)
        except Exception as exc:
            raise PipelineError("evaluate", exc) from exc
    return PipelineOutput(tuple(tracksets), results, metrics)
