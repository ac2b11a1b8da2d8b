"""Map crop detections back to the full image and merge them with the coarse pass."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .geometry import BoundingBox, Detection, check_single_image, clip, nms
from .scm import CropPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionConfig:
    nms_iou: float = 0.5
    boundary_margin: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ValueError("nms_iou must lie in [0, 1]")
        if self.boundary_margin < 0:
            raise ValueError("boundary_margin must be >= 0")


def to_crop(d: Detection, plan: CropPlan) -> Detection:
    b, s = d.bbox, plan.source
    box = BoundingBox(
        (b.x - s.x) * plan.scale + plan.pad_x,
        (b.y - s.y) * plan.scale + plan.pad_y,
        b.w * plan.scale,
        b.h * plan.scale,
    )
    return replace(d, bbox=box)


def to_global(d: Detection, plan: CropPlan) -> Detection | None:
    """Inverse of :func:`to_crop`, clipped to the plan's source rectangle.

    Returns None when the box covers no source pixels (it sits in the
    letterbox padding).
    """
    b, s = d.bbox, plan.source
    box = BoundingBox(
        (b.x - plan.pad_x) / plan.scale + s.x,
        (b.y - plan.pad_y) / plan.scale + s.y,
        b.w / plan.scale,
        b.h / plan.scale,
    )
    clipped = clip(box, s)
    if clipped is None:
        log.debug("dropping crop detection %s: no overlap with source %s", b.to_list(), s.to_list())
        return None
    return replace(d, bbox=clipped)


def filter_boundary(
    dets: Sequence[Detection], plan: CropPlan, image_w: float, image_h: float, margin: float
) -> list[Detection]:
    """Drop global-frame detections touching an interior edge of the crop source.

    An edge within ``margin`` of the image border is not interior, so boxes
    cut only by the image itself survive.
    """
    s = plan.source
    interior = (
        s.x > margin,
        s.y > margin,
        s.x2 < image_w - margin,
        s.y2 < image_h - margin,
    )
    out = []
    for d in dets:
        b = d.bbox
        touches = (
            b.x - s.x <= margin,
            b.y - s.y <= margin,
            s.x2 - b.x2 <= margin,
            s.y2 - b.y2 <= margin,
        )
        if not any(t and e for t, e in zip(touches, interior)):
            out.append(d)
    return out


def fuse(
    coarse: Sequence[Detection],
    fine: Sequence[tuple[CropPlan, Sequence[Detection]]],
    cfg: FusionConfig,
    image_w: float,
    image_h: float,
) -> list[Detection]:
    """Coarse detections plus remapped, boundary-filtered crop detections, then per-category NMS.

    ``fine`` holds crop-frame detections paired with the plan that produced them.
    """
    check_single_image(list(coarse) + [d for _, ds in fine for d in ds])
    image = BoundingBox(0.0, 0.0, float(image_w), float(image_h))
    pool = []
    for plan, dets in fine:
        mapped = [g for g in (to_global(d, plan) for d in dets) if g is not None]
        pool.extend(filter_boundary(mapped, plan, image_w, image_h, cfg.boundary_margin))
    pool.extend(coarse)
    inside = []
    for d in pool:
        b = clip(d.bbox, image)
        if b is not None:
            inside.append(d if b == d.bbox else replace(d, bbox=b))
    return nms(inside, cfg.nms_iou)
