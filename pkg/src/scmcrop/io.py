"""COCO JSON subset reader/writer, results files and crop-plan files."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

from .geometry import BoundingBox, Detection, GroundTruth
from .scm import CropPlan

PathLike = str | os.PathLike


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ImageInfo:
    id: Hashable
    width: float
    height: float
    file_name: str = ""


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class DatasetBundle:
    images: list[ImageInfo] = field(default_factory=list)
    annotations: list[GroundTruth] = field(default_factory=list)
    categories: list[Category] = field(default_factory=list)

    @property
    def image_ids(self) -> list[Hashable]:
        return [im.id for im in self.images]

    @property
    def category_ids(self) -> list[int]:
        return [c.id for c in self.categories]

    def image(self, image_id: Hashable) -> ImageInfo:
        for im in self.images:
            if im.id == image_id:
                return im
        raise KeyError(image_id)

    def to_json(self) -> dict:
        return {
            "images": [
                {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
                for im in self.images
            ],
            "annotations": [
                {"id": g.annotation_id, "image_id": g.image_id, "category_id": g.category_id,
                 "bbox": g.bbox.to_list()}
                for g in self.annotations
            ],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }


def _read_json(path: PathLike) -> Any:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}: malformed JSON: {e}") from e


def write_json(obj: Any, path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _bbox(raw: Any, what: str) -> BoundingBox:
    try:
        x, y, w, h = (float(v) for v in raw)
        return BoundingBox(x, y, w, h)
    except (TypeError, ValueError) as e:
        raise DatasetError(f"{what}: invalid bbox {raw!r}: {e}") from e


def parse_dataset(data: Any) -> DatasetBundle:
    if not isinstance(data, dict):
        raise DatasetError("annotation file must hold a JSON object")
    try:
        images = [
            ImageInfo(im["id"], float(im["width"]), float(im["height"]), im.get("file_name", ""))
            for im in data.get("images", [])
        ]
        categories = [Category(int(c["id"]), str(c.get("name", ""))) for c in data.get("categories", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"malformed image or category record: {e!r}") from e
    for im in images:
        if im.width <= 0 or im.height <= 0:
            raise DatasetError(f"image {im.id!r}: nonpositive dimensions")
    image_ids = {im.id for im in images}
    cat_ids = {c.id for c in categories}
    if len(image_ids) != len(images):
        raise DatasetError("duplicate image id")
    if len(cat_ids) != len(categories):
        raise DatasetError("duplicate category id")

    annotations = []
    seen: set[int] = set()
    for raw in data.get("annotations", []):
        ann_id = raw.get("id") if isinstance(raw, dict) else None
        if ann_id is None:
            raise DatasetError(f"annotation without id: {raw!r}")
        what = f"annotation {ann_id}"
        if ann_id in seen:
            raise DatasetError(f"{what}: duplicate id")
        seen.add(ann_id)
        if raw.get("image_id") not in image_ids:
            raise DatasetError(f"{what}: unknown image_id {raw.get('image_id')!r}")
        if raw.get("category_id") not in cat_ids:
            raise DatasetError(f"{what}: unknown category_id {raw.get('category_id')!r}")
        box = _bbox(raw.get("bbox"), what)
        annotations.append(GroundTruth(int(ann_id), raw["image_id"], int(raw["category_id"]), box))
    return DatasetBundle(images, annotations, categories)


def load_dataset(path: PathLike) -> DatasetBundle:
    """Read and referentially validate a COCO annotation file (unknown fields ignored)."""
    return parse_dataset(_read_json(path))


def save_dataset(bundle: DatasetBundle, path: PathLike) -> None:
    write_json(bundle.to_json(), path)


def detections_to_json(dets: Sequence[Detection]) -> list[dict]:
    return [
        {"image_id": d.image_id, "category_id": d.category_id, "bbox": d.bbox.to_list(), "score": d.score}
        for d in dets
    ]


def parse_results(data: Any) -> list[Detection]:
    if not isinstance(data, list):
        raise DatasetError("results file must hold a JSON array")
    out = []
    for k, raw in enumerate(data):
        what = f"result #{k}"
        try:
            box = _bbox(raw["bbox"], what)
            out.append(Detection(raw["image_id"], int(raw["category_id"]), box, float(raw["score"])))
        except (KeyError, TypeError) as e:
            raise DatasetError(f"{what}: missing or bad field {e!r}") from e
        except ValueError as e:
            if isinstance(e, DatasetError):
                raise
            raise DatasetError(f"{what}: {e}") from e
    return out


def load_results(path: PathLike) -> list[Detection]:
    return parse_results(_read_json(path))


def save_results(dets: Sequence[Detection], path: PathLike) -> None:
    write_json(detections_to_json(dets), path)


def load_plans(path: PathLike) -> list[CropPlan]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise DatasetError("crop-plan file must hold a JSON array")
    try:
        return [CropPlan.from_json(d) for d in data]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"{path}: malformed crop plan: {e!r}") from e


def save_plans(plans: Sequence[CropPlan], path: PathLike) -> None:
    write_json([p.to_json() for p in plans], path)
