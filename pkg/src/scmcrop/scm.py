"""Segmentation clustering: dense-grid ranking, 8-connected merging, crop planning.

Grid cells are indexed ``(i, j)`` with ``i`` the column and ``j`` the row;
density matrices are stored ``[j, i]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import BoundingBox
from .heatmap import Heatmap, binarize, grid_densities, grid_edges

Cell = tuple[int, int]


@dataclass(frozen=True)
class SCMConfig:
    grid_x: int = 16
    grid_y: int = 10
    top_k: int = 30
    crop_budget: int = 2
    pad: float = 16.0
    target_w: float = 1024.0
    target_h: float = 640.0
    min_region_cells: int = 1

    def __post_init__(self) -> None:
        if self.grid_x < 1 or self.grid_y < 1:
            raise ValueError("grid dims must be >= 1")
        if not 1 <= self.top_k <= self.grid_x * self.grid_y:
            raise ValueError(f"top_k must lie in [1, {self.grid_x * self.grid_y}]")
        # crop_budget 0 switches fine detection off entirely
        if self.crop_budget < 0:
            raise ValueError("crop_budget must be >= 0")
        if self.target_w <= 0 or self.target_h <= 0:
            raise ValueError("target dims must be positive")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.min_region_cells < 1:
            raise ValueError("min_region_cells must be >= 1")


@dataclass(frozen=True)
class ClusterRegion:
    cells: frozenset[Cell]
    aggregate_density: float
    bbox_px: BoundingBox

    @property
    def anchor(self) -> Cell:
        """Row-major first member cell, as ``(i, j)``."""
        j, i = min((j, i) for i, j in self.cells)
        return i, j


@dataclass(frozen=True)
class CropPlan:
    """Letterbox transform from a source rectangle onto a fixed-size canvas."""

    source: BoundingBox
    scale: float
    pad_x: float
    pad_y: float
    target_w: float
    target_h: float

    def to_json(self) -> dict:
        return {
            "source": self.source.to_list(),
            "scale": self.scale,
            "pad_x": self.pad_x,
            "pad_y": self.pad_y,
            "target": [self.target_w, self.target_h],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CropPlan":
        tw, th = d["target"]
        return cls(BoundingBox(*map(float, d["source"])), float(d["scale"]),
                   float(d["pad_x"]), float(d["pad_y"]), float(tw), float(th))


def select_topk(densities: np.ndarray, top_k: int) -> set[Cell]:
    """Indices of the ``top_k`` densest positive cells; ties go to row-major order."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    flat = np.asarray(densities, dtype=np.float64).ravel()
    gx = densities.shape[1]
    order = np.argsort(-flat, kind="stable")
    picked = [int(k) for k in order[:top_k] if flat[k] > 0]
    return {(k % gx, k // gx) for k in picked}


def merge_8connected(cells: Iterable[Cell]) -> list[frozenset[Cell]]:
    """Partition cells into maximal 8-connected components.

    Components are returned in row-major order of their first cell.
    """
    cells = set(cells)
    parent = {c: c for c in cells}

    def find(c: Cell) -> Cell:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for i, j in cells:
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                n = (i + di, j + dj)
                if n != (i, j) and n in parent:
                    ra, rb = find((i, j)), find(n)
                    if ra != rb:
                        parent[rb] = ra

    groups: dict[Cell, set[Cell]] = {}
    for c in cells:
        groups.setdefault(find(c), set()).add(c)
    comps = [frozenset(g) for g in groups.values()]
    comps.sort(key=lambda g: min((j, i) for i, j in g))
    return comps


def region_bbox(
    cells: Iterable[Cell],
    densities: np.ndarray,
    heatmap_w: int,
    heatmap_h: int,
    image_w: float,
    image_h: float,
    downsample: int,
    pad: float,
) -> ClusterRegion:
    """Pixel hull of the member cells' windows, padded and clipped to the image."""
    cells = frozenset(cells)
    if not cells:
        raise ValueError("region must contain at least one cell")
    grid_y, grid_x = densities.shape
    xe = grid_edges(heatmap_w, grid_x)
    ye = grid_edges(heatmap_h, grid_y)
    ii = [i for i, _ in cells]
    jj = [j for _, j in cells]
    x0 = max(0.0, float(xe[min(ii)] * downsample) - pad)
    y0 = max(0.0, float(ye[min(jj)] * downsample) - pad)
    x1 = min(float(image_w), float(xe[max(ii) + 1] * downsample) + pad)
    y1 = min(float(image_h), float(ye[max(jj) + 1] * downsample) + pad)
    total = float(sum(densities[j, i] for i, j in cells))
    return ClusterRegion(cells, total, BoundingBox.from_xyxy(x0, y0, x1, y1))


def pick_crops(
    regions: Sequence[ClusterRegion], crop_budget: int, min_region_cells: int = 1
) -> list[ClusterRegion]:
    """Keep the ``crop_budget`` densest regions (ties: more cells, then row-major anchor)."""
    eligible = [r for r in regions if len(r.cells) >= min_region_cells]
    eligible.sort(key=lambda r: (-r.aggregate_density, -len(r.cells), r.anchor[1], r.anchor[0]))
    return eligible[:crop_budget]


def plan_crop(bbox: BoundingBox, target_w: float, target_h: float) -> CropPlan:
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dims must be positive")
    sx, sy = target_w / bbox.w, target_h / bbox.h
    if sx <= sy:
        scale, pad_x, pad_y = sx, 0.0, max(0.0, (target_h - sx * bbox.h) / 2.0)
    else:
        scale, pad_x, pad_y = sy, max(0.0, (target_w - sy * bbox.w) / 2.0), 0.0
    return CropPlan(bbox, scale, pad_x, pad_y, float(target_w), float(target_h))


def find_regions(
    h: Heatmap, cfg: SCMConfig, image_w: float, image_h: float, tau: float = 0.2
) -> list[ClusterRegion]:
    """All merged candidate regions for a heatmap, before the crop budget applies."""
    R = h.downsample
    if (h.width, h.height) != (math.ceil(image_w / R), math.ceil(image_h / R)):
        raise ValueError(
            f"heatmap {h.width}x{h.height} (R={R}) inconsistent with image {image_w}x{image_h}"
        )
    mask = binarize(h, tau)
    dens = grid_densities(h, cfg.grid_x, cfg.grid_y, mask=mask)
    picked = select_topk(dens, cfg.top_k)
    return [
        region_bbox(comp, dens, h.width, h.height, image_w, image_h, R, cfg.pad)
        for comp in merge_8connected(picked)
    ]


def propose(
    h: Heatmap, cfg: SCMConfig, image_w: float, image_h: float, tau: float = 0.2
) -> list[CropPlan]:
    regions = find_regions(h, cfg, image_w, image_h, tau)
    chosen = pick_crops(regions, cfg.crop_budget, cfg.min_region_cells)
    return [plan_crop(r.bbox_px, cfg.target_w, cfg.target_h) for r in chosen]
