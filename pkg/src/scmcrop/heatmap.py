"""Density heatmaps: Gaussian center splatting, binarization, grid sums, SCMH files."""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Detection, GroundTruth

MAGIC = b"SCMH"
_HEADER = struct.Struct("<4sIII")


class HeatmapFormatError(ValueError):
    """Raised when an SCMH file is malformed; ``offset`` is the offending byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class HeatmapConfig:
    downsample: int = 4
    gaussian_sigma_divisor: float = 6.0
    binarize_threshold: float = 0.2

    def __post_init__(self) -> None:
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.gaussian_sigma_divisor <= 0:
            raise ValueError("gaussian_sigma_divisor must be > 0")


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Non-negative density grid, ``values[row, col]`` with float32 storage."""

    width: int
    height: int
    downsample: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"heatmap dims must be positive, got {self.width}x{self.height}")
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")
        vals = np.array(self.values, dtype=np.float32, copy=True)
        if vals.shape != (self.height, self.width):
            raise ValueError(f"values shape {vals.shape} != ({self.height}, {self.width})")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("heatmap values must be finite and >= 0")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, width: int, height: int, downsample: int = 4) -> "Heatmap":
        return cls(width, height, downsample, np.zeros((height, width), np.float32))

    @classmethod
    def for_image(cls, image_w: float, image_h: float, downsample: int) -> "Heatmap":
        return cls.zeros(math.ceil(image_w / downsample), math.ceil(image_h / downsample), downsample)

    def same_as(self, other: "Heatmap") -> bool:
        return (
            (self.width, self.height, self.downsample) == (other.width, other.height, other.downsample)
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class LocationMask:
    width: int
    height: int
    bits: np.ndarray = field(repr=False)


def splat(
    objects: Sequence[GroundTruth | Detection],
    image_w: float,
    image_h: float,
    cfg: HeatmapConfig = HeatmapConfig(),
) -> Heatmap:
    """Render one peak-1.0 Gaussian per object center, composed by per-cell max.

    Sigma in cells is ``max(1, min(w, h) / (divisor * R))``; cells further
    than 3 sigma from a center are not written by that object.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dims must be positive")
    R = cfg.downsample
    W, H = math.ceil(image_w / R), math.ceil(image_h / R)
    out = np.zeros((H, W), dtype=np.float64)
    tol = 1e-6
    for obj in objects:
        b = obj.bbox
        if b.x < -tol or b.y < -tol or b.x2 > image_w + tol or b.y2 > image_h + tol:
            raise ValueError(f"object {b.to_list()} lies outside the {image_w}x{image_h} image")
        cx, cy = b.center
        ci = min(int(math.floor(cx / R)), W - 1)
        cj = min(int(math.floor(cy / R)), H - 1)
        sigma = max(1.0, min(b.w, b.h) / (cfg.gaussian_sigma_divisor * R))
        r = int(math.floor(3.0 * sigma))
        x0, x1 = max(0, ci - r), min(W, ci + r + 1)
        y0, y1 = max(0, cj - r), min(H, cj + r + 1)
        dx = np.arange(x0, x1) - ci
        dy = np.arange(y0, y1) - cj
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        g = np.exp(-d2 / (2.0 * sigma * sigma))
        g[d2 > 9.0 * sigma * sigma] = 0.0
        np.maximum(out[y0:y1, x0:x1], g, out=out[y0:y1, x0:x1])
    return Heatmap(W, H, R, out)


def binarize(h: Heatmap, tau: float) -> LocationMask:
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    peak = float(h.values.max())
    if peak <= 0.0:
        bits = np.zeros(h.values.shape, dtype=bool)
    else:
        bits = h.values > tau * peak
    return LocationMask(h.width, h.height, bits)


def grid_edges(n: int, cells: int) -> np.ndarray:
    """Window boundaries ``floor(i * n / cells)`` for i = 0..cells."""
    return (np.arange(cells + 1, dtype=np.int64) * n) // cells


def grid_densities(
    h: Heatmap, grid_x: int, grid_y: int, mask: LocationMask | None = None
) -> np.ndarray:
    """Sum heatmap values over a ``grid_y`` x ``grid_x`` partition of the heatmap.

    With ``mask``, cells outside the mask contribute zero.
    """
    if grid_x < 1 or grid_y < 1:
        raise ValueError("grid dims must be >= 1")
    if grid_x > h.width or grid_y > h.height:
        raise ValueError(f"grid {grid_x}x{grid_y} larger than heatmap {h.width}x{h.height}")
    vals = h.values.astype(np.float64)
    if mask is not None:
        if mask.bits.shape != vals.shape:
            raise ValueError("mask and heatmap dims differ")
        vals = np.where(mask.bits, vals, 0.0)
    rows = np.add.reduceat(vals, grid_edges(h.height, grid_y)[:-1], axis=0)
    return np.add.reduceat(rows, grid_edges(h.width, grid_x)[:-1], axis=1)


def save_heatmap(h: Heatmap, path: str | os.PathLike) -> None:
    payload = np.ascontiguousarray(h.values, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, h.width, h.height, h.downsample))
        f.write(payload)


def decode_heatmap(data: bytes) -> Heatmap:
    if len(data) < 4 or data[:4] != MAGIC:
        raise HeatmapFormatError("bad magic, expected b'SCMH'", 0)
    if len(data) < _HEADER.size:
        raise HeatmapFormatError("truncated header", len(data))
    _, width, height, downsample = _HEADER.unpack_from(data)
    if width == 0:
        raise HeatmapFormatError("width must be positive", 4)
    if height == 0:
        raise HeatmapFormatError("height must be positive", 8)
    if downsample == 0:
        raise HeatmapFormatError("downsample must be positive", 12)
    expected = _HEADER.size + 4 * width * height
    if len(data) < expected:
        raise HeatmapFormatError(f"truncated payload, expected {expected} bytes", len(data))
    if len(data) > expected:
        raise HeatmapFormatError("trailing bytes after payload", expected)
    vals = np.frombuffer(data, dtype="<f4", count=width * height, offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise HeatmapFormatError("non-finite value", _HEADER.size + 4 * int(bad[0]))
    neg = np.flatnonzero(vals < 0)
    if neg.size:
        raise HeatmapFormatError("negative value", _HEADER.size + 4 * int(neg[0]))
    return Heatmap(width, height, downsample, vals.reshape(height, width))


def load_heatmap(path: str | os.PathLike) -> Heatmap:
    with open(path, "rb") as f:
        return decode_heatmap(f.read())
