"""Pipeline configuration: one TOML (or JSON) file, sections mirror the dataclasses.

Example::

    [scm]
    grid_x = 16
    grid_y = 10
    top_k = 30
    crop_budget = 2

    [heatmap]
    binarize_threshold = 0.2

    [fusion]
    nms_iou = 0.5

    [eval]
    thresholds = [0.5, 0.75]

    [scene]
    image_w = 2000
    image_h = 1500
    background_count = 20
    seed = 42
    [[scene.clusters]]
    center = [600, 500]
    spread_sigma = 80
    count = 40

    [detector]
    s50 = 24
    slope = 6
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .evaluate import COCO_THRESHOLDS
from .fusion import FusionConfig
from .heatmap import HeatmapConfig
from .scm import SCMConfig
from .simulate import ClusterSpec, DetectorModel, SceneSpec, acceptance_detector, acceptance_scene

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass
class PipelineConfig:
    scm: SCMConfig = field(default_factory=SCMConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)
    thresholds: tuple[float, ...] = COCO_THRESHOLDS
    scene: SceneSpec = field(default_factory=acceptance_scene)
    detector: DetectorModel = field(default_factory=acceptance_detector)

    def __post_init__(self) -> None:
        ts = list(self.thresholds)
        if not ts or ts != sorted(ts) or not all(0.0 <= t <= 1.0 for t in ts):
            raise ValueError("thresholds must be non-empty, ascending and within [0, 1]")
        self.thresholds = tuple(float(t) for t in ts)


def _build(cls, base, section: dict | None):
    if not section:
        return base
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dataclasses.replace(base, **section)


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - {"scm", "fusion", "heatmap", "eval", "scene", "detector"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    scene_sec = dict(data.get("scene", {}))
    if "clusters" in scene_sec:
        scene_sec["clusters"] = tuple(
            ClusterSpec(tuple(float(v) for v in c["center"]), float(c["spread_sigma"]), int(c["count"]))
            for c in scene_sec["clusters"]
        )
    cfg = PipelineConfig(
        scm=_build(SCMConfig, SCMConfig(), data.get("scm")),
        fusion=_build(FusionConfig, FusionConfig(), data.get("fusion")),
        heatmap=_build(HeatmapConfig, HeatmapConfig(), data.get("heatmap")),
        scene=_build(SceneSpec, acceptance_scene(), scene_sec),
        detector=_build(DetectorModel, acceptance_detector(), data.get("detector")),
    )
    extra = set(data.get("eval", {})) - {"thresholds"}
    if extra:
        raise ValueError(f"unknown eval keys: {sorted(extra)}")
    if "thresholds" in data.get("eval", {}):
        cfg = dataclasses.replace(cfg, thresholds=tuple(data["eval"]["thresholds"]))
    return cfg


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    """Read a ``.toml`` or ``.json`` config; None gives all defaults."""
    if path is None:
        return PipelineConfig()
    path = os.fspath(path)
    with open(path, "rb") as f:
        raw = f.read()
    if path.endswith(".json"):
        data = json.loads(raw)
    else:
        data = tomllib.loads(raw.decode())
    return config_from_dict(data)
