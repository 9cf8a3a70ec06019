"""Command-line entry point: ``vispost <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .bitrack import bitrack_merge
from .config import PipelineConfig, load_config
from .datatools import (
    AffineParams,
    FrameObject,
    adjacent_iou_histogram,
    subsample_frames,
    subsample_indices,
    synth_pair,
)
from .ensemble import ensemble_video, rescale_detection
from .evaluation import evaluate, format_report
from .fusion import FusionConfig, fuse_labels
from .masks import mask_to_box, rle_to_dict
from .pipeline import PipelineError, infer_lengths, postprocess, run_pipeline
from .postproc import pseudo_label_records
from .tracker import track_video
from .types import Detection, Direction, GroundTruthDataset, frames_by_index

log = logging.getLogger("vispost")


class UsageError(Exception):
    pass


def _config(args) -> PipelineConfig:
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(getattr(args, "config", None), overrides)
    if getattr(args, "workers", None):
        cfg = dataclasses.replace(cfg, workers=args.workers)
    return cfg


def _split_scale(spec: str) -> Tuple[str, float]:
    path, sep, scale = spec.rpartition("@")
    if not sep:
        return spec, 1.0
    try:
        return path, float(scale)
    except ValueError:
        return spec, 1.0


def _load_models(specs: Sequence[str], gt: Optional[GroundTruthDataset], require_embedding: bool):
    """Parse each detection file and map its boxes/masks to native resolution."""
    sizes = {v.id: (v.height, v.width) for v in gt.videos} if gt is not None else {}
    models: List[Dict[int, List[Detection]]] = []
    for spec in specs:
        path, scale = _split_scale(spec)
        by_video = io.parse_detections(path, require_embedding=require_embedding)
        if scale != 1.0:
            by_video = {
                vid: [rescale_detection(d, scale, sizes.get(vid)) for d in dets]
                for vid, dets in by_video.items()
            }
        models.append(by_video)
    return models


def _lengths(models, gt: Optional[GroundTruthDataset]) -> Dict[int, int]:
    if gt is not None:
        return {v.id: v.length for v in gt.videos}
    return infer_lengths(models)


# -- subcommands -----------------------------------------------------------


def cmd_track(args) -> int:
    cfg = _config(args)
    gt = io.parse_gt(args.gt) if args.gt else None
    (by_video,) = _load_models([args.detections], gt, require_embedding=True)
    lengths = _lengths([by_video], gt)
    tracksets = []
    for vid in sorted(lengths):
        frames = frames_by_index(by_video.get(vid, []), lengths[vid])
        tracksets.append(track_video(frames, cfg.tracker, Direction(args.direction), vid))
    io.write_tracksets(args.out, tracksets)
    log.info("wrote %d track sets to %s", len(tracksets), args.out)
    return 0


def cmd_bitrack(args) -> int:
    cfg = _config(args)
    forward = {ts.video_id: ts for ts in io.parse_tracksets(args.forward)}
    backward = {ts.video_id: ts for ts in io.parse_tracksets(args.backward)}
    if set(forward) != set(backward):
        raise UsageError(
            f"forward and backward files cover different videos: {sorted(set(forward) ^ set(backward))}"
        )
    merged = [bitrack_merge(forward[v], backward[v], cfg.bitrack) for v in sorted(forward)]
    io.write_tracksets(args.out, merged)
    return 0


def cmd_postprocess(args) -> int:
    tracksets = [postprocess(ts) for ts in io.parse_tracksets(args.tracks)]
    io.write_results(args.out, io.tracksets_to_results(tracksets))
    if args.out_tracks:
        io.write_tracksets(args.out_tracks, tracksets)
    return 0


def cmd_ensemble(args) -> int:
    cfg = _config(args)
    gt = io.parse_gt(args.gt) if args.gt else None
    models = _load_models(args.detections, gt, require_embedding=False)
    videos = sorted(set().union(*(m.keys() for m in models)))
    out = {vid: ensemble_video([m.get(vid, []) for m in models], cfg.ensemble) for vid in videos}
    io.write_detections(args.out, out)
    return 0


def _write_metrics(result, json_path: Optional[str]):
    print(format_report(result))
    if json_path:
        with open(json_path, "w") as fh:
            json.dump(result.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def cmd_eval(args) -> int:
    cfg = _config(args)
    gt = io.parse_gt(args.gt)
    results = io.parse_results(args.results)
    _write_metrics(evaluate(results, gt, cfg.eval), args.json)
    return 0


def cmd_analyze_redundancy(args) -> int:
    gt = io.parse_gt(args.gt)
    hist = adjacent_iou_histogram(gt, bins=args.bins, mode=args.mode)
    text = hist.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_subsample(args) -> int:
    gt = io.parse_gt(args.gt)
    sub = subsample_frames(gt, args.k)
    io.write_gt(args.out, sub)
    kept = sum(v.length for v in sub.videos)
    total = sum(v.length for v in gt.videos)
    print(f"kept {kept}/{total} frames ({100.0 * kept / max(total, 1):.1f}%)")
    return 0


def _objects_at(gt: GroundTruthDataset, video_id: int, frame: int) -> List[FrameObject]:
    objs = []
    for inst in gt.instances_of(video_id):
        mask = inst.segmentations[frame] if frame < len(inst.segmentations) else None
        box = inst.boxes[frame] if frame < len(inst.boxes) else None
        if mask is not None and mask.area == 0:
            mask = None
        if box is None and mask is not None:
            box = mask_to_box(mask)
        if box is not None:
            objs.append(FrameObject(box, inst.category_id, mask))
    return objs


def _object_record(obj: FrameObject) -> dict:
    return {
        "track_id": obj.track_id,
        "category_id": obj.category_id,
        "bbox": obj.box.to_xywh(),
        "segmentation": None if obj.mask is None else rle_to_dict(obj.mask),
    }


def cmd_synth_pairs(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(cfg.require_seed())
    gt = io.parse_gt(args.gt)
    pairs = []
    for video in gt.videos:
        next_id = 1
        for frame in subsample_indices(video.length, args.frames_per_video):
            objs = _objects_at(gt, video.id, frame)
            if not objs:
                continue
            params = AffineParams.sample(rng, args.max_shift, args.max_rotation, args.flip_prob)
            key, ref = synth_pair(objs, params, (video.height, video.width), start_id=next_id)
            next_id += len(key)
            pairs.append(
                {
                    "video_id": video.id,
                    "frame": frame,
                    "params": dataclasses.asdict(params),
                    "key": [_object_record(o) for o in key],
                    "reference": [_object_record(o) for o in ref],
                }
            )
    with open(args.out, "w") as fh:
        json.dump(pairs, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    return 0


def _read_score_table(path, width: int):
    probs, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise io.ParseError(path, [f"line {lineno}: non-numeric field"])
            if len(values) != width + 1:
                raise io.ParseError(path, [f"line {lineno}: expected {width} scores and a label, got {len(values)} fields"])
            probs.append(values[:-1])
            labels.append(values[-1])
    return np.array(probs, dtype=np.float64).reshape(len(probs), width), np.array(labels)


def cmd_fuse_labels(args) -> int:
    cfg = _config(args)
    fusion = cfg.fusion
    if args.num_classes is not None or args.num_aux is not None or fusion is None:
        if args.num_classes is None or args.num_aux is None:
            raise UsageError("--num-classes and --num-aux are required (or a fusion section in the config)")
        fusion = FusionConfig(args.num_classes, args.num_aux, cfg.require_seed())
    probs, labels = _read_score_table(args.input, fusion.num_classes + fusion.num_aux)
    out = fuse_labels(probs, labels, fusion)
    with open(args.out, "w") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(v)}\n" for v in out)
    return 0


def cmd_pseudo_filter(args) -> int:
    cfg = _config(args)
    min_len = args.min_len if args.min_len is not None else cfg.trackable_min_len
    records = pseudo_label_records(io.parse_tracksets(args.tracks), min_len)
    with open(args.out, "w") as fh:
        json.dump({"annotations": records}, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if args.no_bitrack:
        cfg = dataclasses.replace(cfg, use_bitrack=False)
    gt = io.parse_gt(args.gt) if args.gt else None
    models = _load_models(args.detections, gt, require_embedding=False)
    out = run_pipeline(models, cfg, gt)
    io.write_results(args.out, out.results)
    if args.out_tracks:
        io.write_tracksets(args.out_tracks, out.tracksets)
    if out.metrics is not None:
        _write_metrics(out.metrics, args.report)
    return 0


# -- argument parsing ------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. tracker.sim_threshold=0.6")
    p.add_argument("--seed", type=int, help="RNG seed (required by commands that sample)")
    p.add_argument("--workers", type=int, help="worker processes (also VISPOST_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vispost", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="one association pass over a detections file")
    _common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--gt", help="annotation file supplying video lengths")
    p.add_argument("--direction", choices=["forward", "backward"], default="forward")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("bitrack", help="merge forward and backward track sets")
    _common(p)
    p.add_argument("--forward", required=True)
    p.add_argument("--backward", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bitrack)

    p = sub.add_parser("postprocess", help="label voting and score calibration; writes a results file")
    _common(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True, help="results JSON")
    p.add_argument("--out-tracks")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("ensemble", help="fuse detections of several models or scales")
    _common(p)
    p.add_argument("--detections", nargs="+", required=True, metavar="FILE[@SCALE]")
    p.add_argument("--gt", help="annotation file supplying native frame sizes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="mAP / AP50 / AP75 / AR1 / AR10 of a results file")
    _common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", help="also write the metrics as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-redundancy", help="adjacent-frame box IoU histogram (CSV)")
    _common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--mode", choices=["video", "object"], default="video")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_redundancy)

    p = sub.add_parser("subsample", help="keep k evenly spaced frames per video")
    _common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("synth-pairs", help="pseudo tracking pairs from single frames")
    _common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--frames-per-video", type=int, default=1)
    p.add_argument("--max-shift", type=float, default=20.0)
    p.add_argument("--max-rotation", type=float, default=10.0)
    p.add_argument("--flip-prob", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_pairs)

    p = sub.add_parser("fuse-labels", help="relabel auxiliary-class rows of a score table")
    _common(p)
    p.add_argument("--input", required=True, help="CSV: C+K score columns then a label column")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--num-aux", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse_labels)

    p = sub.add_parser("pseudo-filter", help="detections of trackable tracklets as pseudo labels")
    _common(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--min-len", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudo_filter)

    p = sub.add_parser("pipeline", help="track, merge, post-process and optionally evaluate")
    _common(p)
    p.add_argument("--detections", nargs="+", required=True, metavar="FILE[@SCALE]")
    p.add_argument("--gt")
    p.add_argument("--no-bitrack", action="store_true", help="forward pass only")
    p.add_argument("--out", required=True, help="results JSON")
    p.add_argument("--out-tracks")
    p.add_argument("--report", help="metrics JSON")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except io.ParseError as exc:
        print(f"error: could not parse {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
