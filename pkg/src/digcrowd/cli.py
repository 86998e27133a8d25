"""Command-line entry point.

Subcommands: ``partition`` (split one scene), ``count`` (run one scene),
``evaluate`` (run a manifest and write reports), ``bench-gen`` (generate a
synthetic benchmark), ``render`` (grayscale heat map of a field/depth
file). Set ``DIGCROWD_LOG`` to a level name to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .density import far_count_from_external
from .detect import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD, decode, nms
from .errors import DigCrowdError
from .metrics import fuse
from .partition import partition
from .pipeline import (
    TOOL_VERSION,
    PipelineParams,
    bench_generate,
    load_manifest,
    run_dataset,
)
from .spatial import apply_spatial_constraint

log = logging.getLogger("digcrowd")


def _setup_logging():
    level = os.environ.get("DIGCROWD_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _add_common_detector_flags(p: argparse.ArgumentParser):
    p.add_argument("--score-threshold", type=float, default=DEFAULT_SCORE_THRESHOLD)
    p.add_argument("--nms-iou", type=float, default=DEFAULT_NMS_IOU)
    p.add_argument("--beta", type=float, default=None, help="override config beta")
    p.add_argument("--knn-k", type=int, default=None, help="override config knn k")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="digcrowd",
        description="Depth-guided crowd counting over manifests of scene files.",
    )
    parser.add_argument("--version", action="version", version=f"digcrowd {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="compute the near/far split of one scene")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clusters", type=int, default=256)
    p.add_argument("--compactness", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--simplify-tol", type=float, default=2.0)
    p.add_argument("--render-debug", action="store_true")

    p = sub.add_parser("count", help="run the full pipeline on one scene")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--detections", default=None, help="text detection list")
    p.add_argument("--tensor", default=None, help="prediction tensor file")
    p.add_argument("--density", default=None, help="density field file")
    p.add_argument("--annotations", default=None)
    _add_common_detector_flags(p)

    p = sub.add_parser("evaluate", help="run a manifest and write CSV/JSON reports")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--render-debug", action="store_true")
    _add_common_detector_flags(p)

    p = sub.add_parser("bench-gen", help="generate a synthetic benchmark directory")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0, help="offset added to every scene seed")
    p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("render", help="render a depth/density file as 8-bit PGM")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    return parser


def _cmd_partition(args) -> int:
    cfg = dio.read_scene_config(args.config)
    depth = dio.read_depth(args.depth)
    result = partition(
        depth,
        cfg,
        target_cluster_count=args.clusters,
        compactness=args.compactness,
        max_iters=args.max_iters,
        simplify_tol=args.simplify_tol,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "scene_id": cfg.scene_id,
        "polyline": [
            {"x_start": s.x_start, "x_end": s.x_end, "k": s.k, "b": s.b}
            for s in result.polyline.segments
        ],
        "threshold_used": result.threshold_used,
        "cluster_mean_depths": list(result.cluster_mean_depths),
        "far_pixels": result.mask.far_count,
        "near_pixels": result.mask.near_count,
        "warnings": list(result.warnings),
    }
    (out / f"{cfg.scene_id}_partition.json").write_text(json.dumps(payload, indent=1))
    dio.write_pgm8(out / f"{cfg.scene_id}_mask.pgm", np.where(result.mask.far, 255, 0))
    if args.render_debug and result.cluster_assignments is not None:
        dio.write_pgm8(
            out / f"{cfg.scene_id}_clusters.pgm",
            (result.cluster_assignments % 256).astype(np.uint8),
        )
    print(json.dumps(payload))
    return 0


def _cmd_count(args) -> int:
    cfg = dio.read_scene_config(args.config)
    params = PipelineParams(
        score_threshold=args.score_threshold,
        nms_iou=args.nms_iou,
        beta=args.beta,
        knn_k=args.knn_k,
    )
    cfg = params.apply_overrides(cfg)
    depth = dio.read_depth(args.depth)
    part = partition(depth, cfg)
    if args.detections:
        dets = dio.read_detections_text(args.detections)
    elif args.tensor:
        dets = nms(decode(dio.read_prediction_tensor(args.tensor), args.score_threshold), args.nms_iou)
    else:
        raise DigCrowdError("count needs --detections or --tensor")
    report = apply_spatial_constraint(dets, part.polyline, cfg.scene_id)
    far = 0.0
    if args.density:
        far = far_count_from_external(args.density, part.mask)
    gt = float("nan")
    if args.annotations:
        _, gt = dio.read_annotations(args.annotations)
    est = fuse(report.kept, far, cfg.scene_id, gt)
    print(
        json.dumps(
            {
                "scene_id": est.scene_id,
                "near_count": est.near_count,
                "far_count": est.far_count,
                "total": est.total,
                "deleted": len(report.deleted),
                "ground_truth": None if gt != gt else gt,
            }
        )
    )
    return 0


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    params = PipelineParams(
        score_threshold=args.score_threshold,
        nms_iou=args.nms_iou,
        beta=args.beta,
        knn_k=args.knn_k,
        workers=args.workers,
        deterministic=args.deterministic,
        render_debug=args.render_debug,
    )
    report = run_dataset(manifest, params, Path(args.out_dir))
    summary = {
        "dataset_id": report.dataset_id,
        "n_scenes": len(report.outcomes),
        "n_succeeded": report.n_succeeded,
        "n_failed": report.n_failed,
        "mae": None if report.evaluation is None else report.evaluation.mae,
        "mse": None if report.evaluation is None else report.evaluation.mse,
    }
    print(json.dumps(summary))
    if report.n_succeeded == 0:
        log.error("no scene succeeded: %s", [o.error for o in report.outcomes])
        return 1
    return 0 if report.n_failed == 0 else 1


def _cmd_bench_gen(args) -> int:
    manifest_path, errors = bench_generate(
        args.spec, args.out_dir, seed_offset=args.seed, deterministic=args.deterministic
    )
    print(json.dumps({"manifest": str(manifest_path), "errors": errors}))
    return 0 if not errors else 1


def _cmd_render(args) -> int:
    path = Path(args.input)
    with path.open("rb") as fh:
        magic = fh.read(4)
    if magic == dio.DIGF_MAGIC:
        values = dio.read_density_field(path).values
    else:
        values = dio.read_depth(path).values
    dio.write_pgm8(args.output, dio.heatmap_u8(values))
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    handlers = {
        "partition": _cmd_partition,
        "count": _cmd_count,
        "evaluate": _cmd_evaluate,
        "bench-gen": _cmd_bench_gen,
        "render": _cmd_render,
    }
    try:
        return handlers[args.command](args)
    except DigCrowdError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
