"""Axis-aligned box arithmetic, IoU/GIoU and per-category NMS.

Boxes use the COCO convention: top-left corner plus width/height in
continuous pixel coordinates. Corner form only appears inside functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    def to_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x2 and self.y <= py <= self.y2


@dataclass(frozen=True)
class Detection:
    image_id: Hashable
    category_id: int
    bbox: BoundingBox
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.category_id < 1:
            raise ValueError(f"category_id must be >= 1, got {self.category_id}")


@dataclass(frozen=True)
class GroundTruth:
    annotation_id: int
    image_id: Hashable
    category_id: int
    bbox: BoundingBox

    def __post_init__(self) -> None:
        if self.category_id < 1:
            raise ValueError(f"category_id must be >= 1, got {self.category_id}")


def area(b: BoundingBox) -> float:
    return b.w * b.h


# Areas inside iou/giou come from corner differences, so that identical
# boxes give intersection == union == hull bit-for-bit.
def _corner_area(b: BoundingBox) -> float:
    return (b.x2 - b.x) * (b.y2 - b.y)


def _intersection(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = _corner_area(a) + _corner_area(b) - inter
    return min(1.0, inter / union)


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: IoU minus the fraction of the enclosing box not covered by the union."""
    inter = _intersection(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    hull = (max(a.x2, b.x2) - min(a.x, b.x)) * (max(a.y2, b.y2) - min(a.y, b.y))
    return min(1.0, inter / union) - max(0.0, hull - union) / hull


def clip(b: BoundingBox, bounds: BoundingBox) -> BoundingBox | None:
    """Intersection of ``b`` with ``bounds``; None when it has zero area."""
    x1 = max(b.x, bounds.x)
    y1 = max(b.y, bounds.y)
    x2 = min(b.x2, bounds.x2)
    y2 = min(b.y2, bounds.y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BoundingBox.from_xyxy(x1, y1, x2, y2)


def ranking_key(d: Detection) -> tuple[float, float, float, float, float, int]:
    """Sort key: score descending, then lower x, lower y, smaller w, smaller h, lower category."""
    b = d.bbox
    return (-d.score, b.x, b.y, b.w, b.h, d.category_id)


def rank(dets: Iterable[Detection]) -> list[Detection]:
    # sorted() is stable, so exact ties keep input order
    return sorted(dets, key=ranking_key)


def check_single_image(dets: Sequence[Detection | GroundTruth]) -> None:
    ids = {d.image_id for d in dets}
    if len(ids) > 1:
        raise ValueError(f"expected detections from one image, got image ids {sorted(map(str, ids))}")


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-category non-maximum suppression.

    A detection survives iff its IoU with every higher-ranked surviving
    detection of the same category is at most ``iou_threshold``.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    check_single_image(dets)
    kept_by_cat: dict[int, list[Detection]] = {}
    out = []
    for d in rank(dets):
        kept = kept_by_cat.setdefault(d.category_id, [])
        if all(iou(d.bbox, k.bbox) <= iou_threshold for k in kept):
            kept.append(d)
            out.append(d)
    return out
