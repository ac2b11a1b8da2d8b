"""Synthetic traffic scenes and a resolution-limited pseudo-detector.

The detector's recall is a logistic function of a vehicle's apparent
min-dimension (pixels after view scaling). Random draws are keyed by
``(seed, annotation_id)`` rather than draw order, so the detect/miss
decision for a vehicle is a fixed threshold on its apparent size.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .evaluate import COCO_THRESHOLDS, EvalResult, coco_ap
from .fusion import FusionConfig, fuse, to_crop
from .geometry import BoundingBox, Detection, GroundTruth, clip
from .heatmap import Heatmap, HeatmapConfig, splat
from .scm import CropPlan, SCMConfig, find_regions, pick_crops, plan_crop

CAR = 1

# stream tags for keyed draws
_OBJECT, _NOISE, _FALSE_POS = 0, 1, 2


@dataclass(frozen=True)
class ClusterSpec:
    center: tuple[float, float]
    spread_sigma: float
    count: int

    def __post_init__(self) -> None:
        if self.spread_sigma <= 0:
            raise ValueError("spread_sigma must be > 0")
        if self.count < 0:
            raise ValueError("cluster count must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    image_w: float = 2000.0
    image_h: float = 1500.0
    clusters: tuple[ClusterSpec, ...] = ()
    background_count: int = 0
    size_log_mean: float = math.log(14.0)
    size_log_sigma: float = 0.4
    aspect_min: float = 0.5
    aspect_max: float = 2.0
    seed: int = 0
    image_id: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "clusters", tuple(
            c if isinstance(c, ClusterSpec) else ClusterSpec(**c) for c in self.clusters
        ))
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("image dims must be positive")
        if self.background_count < 0:
            raise ValueError("background_count must be >= 0")
        if not 0.2 <= self.aspect_min <= self.aspect_max <= 5.0:
            raise ValueError("aspect bounds must satisfy 0.2 <= min <= max <= 5")
        if self.size_log_sigma < 0:
            raise ValueError("size_log_sigma must be >= 0")


@dataclass(frozen=True)
class DetectorModel:
    s50: float = 24.0
    slope: float = 6.0
    loc_sigma_frac: float = 0.05
    score_tp_mean: float = 0.7
    fp_rate_per_megapixel: float = 2.0
    seed: int = 0
    score_sigma: float = 0.1
    fp_score_offset: float = 0.3
    fp_size_log_mean: float = math.log(14.0)
    fp_size_log_sigma: float = 0.4

    def __post_init__(self) -> None:
        if self.s50 <= 0 or self.slope <= 0:
            raise ValueError("s50 and slope must be > 0")
        if not 0.0 <= self.loc_sigma_frac < 0.5:
            raise ValueError("loc_sigma_frac must lie in [0, 0.5)")
        if self.fp_rate_per_megapixel < 0:
            raise ValueError("fp_rate_per_megapixel must be >= 0")

    def recall(self, apparent: float) -> float:
        z = (apparent - self.s50) / self.slope
        # numerically safe logistic
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)


def _vehicle_box(cx, cy, size, aspect, image: BoundingBox) -> BoundingBox | None:
    w, h = (size * aspect, size) if aspect >= 1.0 else (size, size / aspect)
    try:
        b = clip(BoundingBox(cx - w / 2, cy - h / 2, w, h), image)
    except ValueError:
        return None
    if b is None or b.w < 1.0 or b.h < 1.0:
        return None
    return b


def generate_scene(spec: SceneSpec) -> tuple[list[GroundTruth], float, float]:
    rng = np.random.default_rng(spec.seed)
    W, H = spec.image_w, spec.image_h
    image = BoundingBox(0.0, 0.0, W, H)
    centers = []
    for c in spec.clusters:
        xy = rng.normal(c.center, c.spread_sigma, size=(c.count, 2))
        centers.append(xy)
    centers.append(rng.uniform((0.0, 0.0), (W, H), size=(spec.background_count, 2)))
    xy = np.clip(np.concatenate(centers), (0.0, 0.0), (W, H))
    n = len(xy)
    sizes = np.exp(rng.normal(spec.size_log_mean, spec.size_log_sigma, size=n))
    aspects = rng.uniform(spec.aspect_min, spec.aspect_max, size=n)

    gts = []
    for (cx, cy), s, a in zip(xy, sizes, aspects):
        b = _vehicle_box(float(cx), float(cy), float(s), float(a), image)
        if b is not None:
            gts.append(GroundTruth(len(gts) + 1, spec.image_id, CAR, b))
    return gts, W, H


def _score(rng: np.random.Generator, mean: float, sigma: float) -> float:
    return float(np.clip(rng.normal(mean, sigma), 0.01, 1.0))


def simulate_detector(
    gts: Sequence[GroundTruth],
    model: DetectorModel,
    view_scale: float,
    view_bounds: BoundingBox,
    pass_key: int = 0,
    image_id: Hashable | None = None,
) -> list[Detection]:
    """Detections, in global pixels, for a view of ``view_bounds`` magnified by ``view_scale``.

    A ground truth is seen when its center lies in the view; its detect/miss
    draw depends only on ``(model.seed, annotation_id)``. Box noise and
    scores are re-drawn per ``pass_key``; false positives are keyed by
    ``pass_key`` alone.
    """
    if view_scale <= 0:
        raise ValueError("view_scale must be > 0")
    if image_id is None:
        image_id = gts[0].image_id if gts else 1
    out = []
    for g in gts:
        b = g.bbox
        if not view_bounds.contains_point(*b.center):
            continue
        apparent = min(b.w, b.h) * view_scale
        u = np.random.default_rng([model.seed, _OBJECT, g.annotation_id]).random()
        if u >= model.recall(apparent):
            continue
        rng = np.random.default_rng([model.seed, _NOISE, g.annotation_id, pass_key])
        # std is loc_sigma_frac * apparent in viewed pixels, i.e. this in global pixels
        std = model.loc_sigma_frac * min(b.w, b.h)
        x1, y1, x2, y2 = (np.array([b.x, b.y, b.x2, b.y2]) + rng.normal(0.0, 1.0, 4) * std).tolist()
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            continue
        box = clip(BoundingBox.from_xyxy(x1, y1, x2, y2), view_bounds)
        if box is None:
            continue
        out.append(Detection(image_id, g.category_id, box, _score(rng, model.score_tp_mean, model.score_sigma)))

    rng = np.random.default_rng([model.seed, _FALSE_POS, pass_key])
    viewed_mpx = view_bounds.w * view_bounds.h * view_scale**2 / 1e6
    for _ in range(int(rng.poisson(model.fp_rate_per_megapixel * viewed_mpx))):
        cx = view_bounds.x + rng.random() * view_bounds.w
        cy = view_bounds.y + rng.random() * view_bounds.h
        size = float(np.exp(rng.normal(model.fp_size_log_mean, model.fp_size_log_sigma)))
        aspect = float(rng.uniform(0.5, 2.0))
        score = _score(rng, model.score_tp_mean - model.fp_score_offset, model.score_sigma)
        box = _vehicle_box(cx, cy, size, aspect, view_bounds)
        if box is not None:
            out.append(Detection(image_id, CAR, box, score))
    return out


@dataclass
class PipelineRun:
    """Every intermediate of one coarse -> SCM -> fine -> fusion run."""

    gts: list[GroundTruth]
    image_w: float
    image_h: float
    coarse: list[Detection]
    heatmap: Heatmap
    n_regions: int
    plans: list[CropPlan]
    crop_detections: list[list[Detection]]
    fused: list[Detection]
    coarse_eval: EvalResult
    fused_eval: EvalResult
    extra: dict = field(default_factory=dict)


def run_scene(
    scene: SceneSpec,
    model: DetectorModel,
    scm_cfg: SCMConfig = SCMConfig(),
    heatmap_cfg: HeatmapConfig = HeatmapConfig(),
    fusion_cfg: FusionConfig = FusionConfig(),
    thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> PipelineRun:
    t0 = time.perf_counter()
    gts, W, H = generate_scene(scene)
    image = BoundingBox(0.0, 0.0, W, H)
    coarse_scale = min(scm_cfg.target_w / W, scm_cfg.target_h / H)
    coarse = simulate_detector(gts, model, coarse_scale, image, pass_key=0, image_id=scene.image_id)
    t_coarse = time.perf_counter() - t0

    hm = splat(coarse, W, H, heatmap_cfg)
    regions = find_regions(hm, scm_cfg, W, H, heatmap_cfg.binarize_threshold)
    chosen = pick_crops(regions, scm_cfg.crop_budget, scm_cfg.min_region_cells)
    plans = [plan_crop(r.bbox_px, scm_cfg.target_w, scm_cfg.target_h) for r in chosen]
    crop_dets = []
    for k, plan in enumerate(plans, start=1):
        found = simulate_detector(gts, model, plan.scale, plan.source, pass_key=k, image_id=scene.image_id)
        crop_dets.append([to_crop(d, plan) for d in found])
    fused = fuse(coarse, list(zip(plans, crop_dets)), fusion_cfg, W, H)
    t_total = time.perf_counter() - t0

    vocab = dict(image_ids=[scene.image_id], category_ids=[CAR], thresholds=thresholds)
    coarse_eval = coco_ap(coarse, gts, **vocab)
    fused_eval = coco_ap(fused, gts, **vocab)
    coarse_eval.per_image_seconds = t_coarse
    fused_eval.per_image_seconds = t_total
    return PipelineRun(gts, W, H, coarse, hm, len(regions), plans, crop_dets, fused, coarse_eval, fused_eval)


def run_pipeline(
    scene: SceneSpec,
    model: DetectorModel,
    scm_cfg: SCMConfig = SCMConfig(),
    **kwargs,
) -> tuple[EvalResult, EvalResult]:
    """Coarse-only and fused evaluation of one simulated scene."""
    run = run_scene(scene, model, scm_cfg, **kwargs)
    return run.coarse_eval, run.fused_eval


def acceptance_scene(seed: int = 42) -> SceneSpec:
    """The reference scene: two dense clusters plus sparse background traffic."""
    return SceneSpec(
        image_w=2000.0,
        image_h=1500.0,
        clusters=(
            ClusterSpec((600.0, 500.0), 80.0, 40),
            ClusterSpec((1400.0, 1000.0), 80.0, 40),
        ),
        background_count=20,
        size_log_mean=math.log(14.0),
        size_log_sigma=0.4,
        seed=seed,
    )


def acceptance_detector(seed: int = 42, s50: float = 24.0) -> DetectorModel:
    return DetectorModel(s50=s50, slope=6.0, loc_sigma_frac=0.05, fp_rate_per_megapixel=2.0, seed=seed)
