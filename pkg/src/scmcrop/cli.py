"""Command-line front end: propose / fuse / eval / simulate / pipeline."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import io
from .config import PipelineConfig, load_config
from .evaluate import coco_ap, format_table
from .fusion import fuse
from .geometry import BoundingBox, clip
from .heatmap import load_heatmap, save_heatmap, splat
from .scm import find_regions, pick_crops, plan_crop
from .simulate import generate_scene, run_scene, simulate_detector

log = logging.getLogger("scmcrop")


def _pair(text: str, conv=int) -> tuple:
    try:
        a, b = text.lower().split("x")
        return conv(a), conv(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}")


def _dims(text: str) -> tuple[float, float]:
    return _pair(text, float)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--grid", type=_pair, metavar="GXxGY", help="SCM grid (default 16x10)")
    p.add_argument("--topk", type=int, help="top-K grid cells (default 30)")
    p.add_argument("--crops", type=int, help="crop budget per image (default 2)")
    p.add_argument("--tau", type=float, help="binarize threshold, fraction of max (default 0.2)")
    p.add_argument("--nms-iou", type=float, help="fusion NMS IoU (default 0.5)")
    p.add_argument("--target", type=_dims, metavar="WxH", help="crop target size (default 1024x640)")
    p.add_argument("--seed", type=int, help="seed for scene and detector")
    p.add_argument("--out-dir", help="directory for output artifacts")
    p.add_argument("-v", "--verbose", action="store_true")


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file values with command-line flags layered on top."""
    cfg = load_config(args.config)
    scm = {}
    if args.grid:
        scm["grid_x"], scm["grid_y"] = args.grid
    if args.topk is not None:
        scm["top_k"] = args.topk
    if args.crops is not None:
        scm["crop_budget"] = args.crops
    if args.target:
        scm["target_w"], scm["target_h"] = args.target
    cfg.scm = dataclasses.replace(cfg.scm, **scm)
    if args.tau is not None:
        cfg.heatmap = dataclasses.replace(cfg.heatmap, binarize_threshold=args.tau)
    if args.nms_iou is not None:
        cfg.fusion = dataclasses.replace(cfg.fusion, nms_iou=args.nms_iou)
    if args.seed is not None:
        cfg.scene = dataclasses.replace(cfg.scene, seed=args.seed)
        cfg.detector = dataclasses.replace(cfg.detector, seed=args.seed)
    return cfg


def _out_dir(args) -> Path | None:
    if not args.out_dir:
        return None
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_propose(args, parser) -> int:
    cfg = resolve_config(args)
    W, H = args.image
    if args.heatmap:
        hm = load_heatmap(args.heatmap)
    else:
        dets = io.load_results(args.detections)
        if args.image_id is not None:
            dets = [d for d in dets if str(d.image_id) == args.image_id]
        image = BoundingBox(0.0, 0.0, W, H)
        kept = []
        for d in dets:
            b = clip(d.bbox, image)
            if b is not None:
                kept.append(dataclasses.replace(d, bbox=b))
        hm = splat(kept, W, H, cfg.heatmap)
    regions = find_regions(hm, cfg.scm, W, H, cfg.heatmap.binarize_threshold)
    chosen = pick_crops(regions, cfg.scm.crop_budget, cfg.scm.min_region_cells)
    plans = [plan_crop(r.bbox_px, cfg.scm.target_w, cfg.scm.target_h) for r in chosen]
    summary = f"regions found: {len(regions)}, crops emitted: {len(plans)}"
    if args.out:
        io.save_plans(plans, args.out)
        print(summary)
    else:
        json.dump([p.to_json() for p in plans], sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
        print(summary, file=sys.stderr)
    return 0


def cmd_fuse(args, parser) -> int:
    cfg = resolve_config(args)
    plans = io.load_plans(args.plans)
    if len(plans) != len(args.crop_results):
        parser.error(f"{len(plans)} crop plans but {len(args.crop_results)} crop result files")
    coarse = io.load_results(args.coarse)
    fine = [(p, io.load_results(path)) for p, path in zip(plans, args.crop_results)]
    W, H = args.image
    fused = fuse(coarse, fine, cfg.fusion, W, H)
    io.save_results(fused, args.out)
    print(f"fused {len(fused)} detections from {len(coarse)} coarse and "
          f"{sum(len(d) for _, d in fine)} crop detections")
    return 0


def cmd_eval(args, parser) -> int:
    cfg = resolve_config(args)
    bundle = io.load_dataset(args.annotations)
    dets = io.load_results(args.results)
    thresholds = args.thresholds if args.thresholds else cfg.thresholds
    res = coco_ap(dets, bundle.annotations, thresholds, image_ids=bundle.image_ids,
                  category_ids=bundle.category_ids, max_dets=args.max_dets)
    print(format_table([(args.name, res)]))
    if args.out:
        io.write_json(res.metrics(), args.out)
    return 0


def cmd_simulate(args, parser) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    if out is None:
        parser.error("simulate needs --out-dir")
    gts, W, H = generate_scene(cfg.scene)
    image = BoundingBox(0.0, 0.0, W, H)
    scale = min(cfg.scm.target_w / W, cfg.scm.target_h / H)
    coarse = simulate_detector(gts, cfg.detector, scale, image, image_id=cfg.scene.image_id)
    io.save_dataset(_scene_bundle(cfg, gts, W, H), out / "annotations.json")
    io.save_results(coarse, out / "coarse_results.json")
    print(f"scene {W:g}x{H:g}: {len(gts)} vehicles, {len(coarse)} coarse detections -> {out}")
    return 0


def _scene_bundle(cfg: PipelineConfig, gts, W, H) -> io.DatasetBundle:
    return io.DatasetBundle(
        [io.ImageInfo(cfg.scene.image_id, W, H, f"scene_{cfg.scene.seed}.png")],
        list(gts),
        [io.Category(1, "car")],
    )


def cmd_pipeline(args, parser) -> int:
    cfg = resolve_config(args)
    run = run_scene(cfg.scene, cfg.detector, cfg.scm, cfg.heatmap, cfg.fusion, cfg.thresholds)
    rows = [("coarse-only", run.coarse_eval), ("fused", run.fused_eval)]
    print(format_table(rows, timing=not args.no_timing))
    out = _out_dir(args)
    if out is not None:
        io.save_dataset(_scene_bundle(cfg, run.gts, run.image_w, run.image_h), out / "annotations.json")
        save_heatmap(run.heatmap, out / "heatmap.scmh")
        io.save_plans(run.plans, out / "plans.json")
        io.save_results(run.coarse, out / "coarse_results.json")
        for k, dets in enumerate(run.crop_detections):
            io.save_results(dets, out / f"crop_results_{k}.json")
        io.save_results(run.fused, out / "fused_results.json")
        io.write_json({name: r.metrics() for name, r in rows}, out / "report.json")
        (out / "report.txt").write_text(format_table(rows) + "\n")
        io.write_json({name: r.per_image_seconds for name, r in rows}, out / "timing.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scmcrop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propose", help="heatmap or detections -> crop plans")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--heatmap", help="SCMH heatmap file")
    src.add_argument("--detections", help="COCO results JSON to splat")
    p.add_argument("--image", type=_dims, required=True, metavar="WxH", help="original image size")
    p.add_argument("--image-id", help="only use detections of this image")
    p.add_argument("--out", help="crop-plan JSON (default: stdout)")
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("fuse", help="merge coarse and per-crop detections")
    _common(p)
    p.add_argument("--coarse", required=True, help="coarse-pass COCO results JSON")
    p.add_argument("--plans", required=True, help="crop-plan JSON")
    p.add_argument("--crop-results", nargs="*", default=[], help="one results JSON per plan, in plan order")
    p.add_argument("--image", type=_dims, required=True, metavar="WxH")
    p.add_argument("--out", required=True, help="fused COCO results JSON")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="COCO AP/AP50/AP75 of a results file")
    _common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--thresholds", type=_floats, help="comma-separated IoU thresholds")
    p.add_argument("--max-dets", type=int, help="per image and category cap (default: none)")
    p.add_argument("--name", default="detections", help="row label in the table")
    p.add_argument("--out", help="EvalResult JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="write a synthetic scene and its coarse detections")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="simulate, propose, refine, fuse and compare")
    _common(p)
    p.add_argument("--no-timing", action="store_true", help="omit the wall-clock column")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, parser)
    except (OSError, ValueError, KeyError) as e:
        msg = e.strerror + f": {e.filename}" if isinstance(e, OSError) and e.strerror else str(e)
        print(f"scmcrop {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
