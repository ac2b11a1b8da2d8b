"""COCO-protocol evaluation: greedy matching, 101-point AP, AP/AP50/AP75."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .geometry import Detection, GroundTruth, iou, rank, ranking_key

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
# k / 100 is correctly rounded, unlike linspace (whose [70] is 0.7000000000000001),
# so comparisons against tp / n_gt agree with exact rational arithmetic
RECALL_POINTS = np.arange(101) / 100.0


@dataclass
class EvalResult:
    ap: float
    ap50: float
    ap75: float
    per_category: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    per_image_seconds: float = 0.0

    def metrics(self) -> dict:
        """Everything except timing; stable across reruns."""
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "per_category": {
                str(c): {"ap": v[0], "ap50": v[1], "ap75": v[2]}
                for c, v in sorted(self.per_category.items())
            },
        }

    def to_json(self, timing: bool = True) -> dict:
        out = self.metrics()
        if timing:
            out["per_image_seconds"] = self.per_image_seconds
        return out


def format_table(rows: Sequence[tuple[str, EvalResult]], timing: bool = False) -> str:
    """Aligned text table with Method / AP / AP50 / AP75 columns (percent)."""
    header = ["Method", "AP", "AP50", "AP75"] + (["s/img"] if timing else [])
    body = []
    for name, r in rows:
        line = [name, f"{100 * r.ap:.1f}", f"{100 * r.ap50:.1f}", f"{100 * r.ap75:.1f}"]
        if timing:
            line.append(f"{r.per_image_seconds:.4f}")
        body.append(line)
    widths = [max(len(row[k]) for row in [header] + body) for k in range(len(header))]

    def fmt(row: list[str]) -> str:
        first = row[0].ljust(widths[0])
        return "  ".join([first] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])])

    return "\n".join(fmt(r) for r in [header] + body)


def match_greedy(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_t: float
) -> list[tuple[Detection, bool]]:
    """COCO matching for one image and one category.

    Detections are visited in rank order; each takes the still-unmatched
    ground truth of highest IoU (ties: lower annotation id) if that IoU
    reaches ``iou_t``.
    """
    keys = {(d.image_id, d.category_id) for d in dets} | {(g.image_id, g.category_id) for g in gts}
    if len(keys) > 1:
        raise ValueError("match_greedy expects a single image and category")
    free = sorted(gts, key=lambda g: g.annotation_id)
    out = []
    for d in rank(dets):
        best, best_iou = None, iou_t
        for g in free:
            v = iou(d.bbox, g.bbox)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = g, v
        if best is not None:
            free.remove(best)
        out.append((d, best is not None))
    return out


def average_precision(labels: Sequence[bool], n_gt: int) -> float | None:
    """101-point interpolated AP of a rank-ordered TP/FP sequence.

    Returns None when there is nothing to score (no ground truth and no
    detections); such categories are left out of means.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    if n_gt == 0:
        return None if len(labels) == 0 else 0.0
    if len(labels) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(labels, dtype=np.float64))
    fp = np.cumsum(~np.asarray(labels, dtype=bool))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    # fsum keeps hand-computable cases exact, e.g. (41 + 20 * 0.6) / 101 == 53 / 101
    return math.fsum(sampled.tolist()) / len(RECALL_POINTS)


def _pool_key(d: Detection) -> tuple:
    return ranking_key(d) + (str(d.image_id),)


def coco_ap(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    thresholds: Iterable[float] = COCO_THRESHOLDS,
    image_ids: Iterable[Hashable] | None = None,
    category_ids: Iterable[int] | None = None,
    max_dets: int | None = None,
) -> EvalResult:
    """AP averaged over IoU thresholds and categories, plus AP50 and AP75.

    ``image_ids``/``category_ids`` give the dataset vocabulary; detections
    referencing anything outside it are rejected.
    """
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("need at least one IoU threshold")
    if image_ids is not None:
        known = set(image_ids)
        for d in dets:
            if d.image_id not in known:
                raise ValueError(f"detection references unknown image_id {d.image_id!r}")
    if category_ids is not None:
        known_c = set(category_ids)
        for d in dets:
            if d.category_id not in known_c:
                raise ValueError(f"detection references unknown category_id {d.category_id}")

    by_key_d: dict[tuple, list[Detection]] = {}
    by_key_g: dict[tuple, list[GroundTruth]] = {}
    for d in dets:
        by_key_d.setdefault((d.category_id, d.image_id), []).append(d)
    for g in gts:
        by_key_g.setdefault((g.category_id, g.image_id), []).append(g)
    if max_dets is not None:
        by_key_d = {k: rank(v)[:max_dets] for k, v in by_key_d.items()}

    cats = sorted({c for c, _ in by_key_d} | {c for c, _ in by_key_g})
    evaluated = list(dict.fromkeys(thresholds + [0.5, 0.75]))
    per_category: dict[int, tuple[float, float, float]] = {}
    for c in cats:
        keys = sorted({k for k in by_key_d if k[0] == c} | {k for k in by_key_g if k[0] == c}, key=str)
        n_gt = sum(len(by_key_g.get(k, [])) for k in keys)
        ap_at = {}
        for t in evaluated:
            pooled = []
            for k in keys:
                pooled.extend(match_greedy(by_key_d.get(k, []), by_key_g.get(k, []), t))
            pooled.sort(key=lambda p: _pool_key(p[0]))
            ap_at[t] = average_precision([tp for _, tp in pooled], n_gt)
        if ap_at[0.5] is None:
            continue
        per_category[c] = (
            float(np.mean([ap_at[t] for t in thresholds])),
            ap_at[0.5],
            ap_at[0.75],
        )

    if not per_category:
        return EvalResult(0.0, 0.0, 0.0, {})
    vals = np.array(list(per_category.values()))
    return EvalResult(float(vals[:, 0].mean()), float(vals[:, 1].mean()), float(vals[:, 2].mean()), per_category)
