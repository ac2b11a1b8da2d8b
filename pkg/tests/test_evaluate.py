import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import exhaustive_max_tp, interp_ap_101
from scmcrop.evaluate import (
    COCO_THRESHOLDS,
    EvalResult,
    average_precision,
    coco_ap,
    format_table,
    match_greedy,
)
from scmcrop.geometry import BoundingBox, Detection, GroundTruth, iou
from scmcrop.io import parse_dataset, parse_results

GOLDEN = Path(__file__).parent / "fixtures" / "golden_eval.json"


def D(x, y, w, h, score, image=1, cat=1):
    return Detection(image, cat, BoundingBox(float(x), float(y), float(w), float(h)), score)


def G(k, x, y, w, h, image=1, cat=1):
    return GroundTruth(k, image, cat, BoundingBox(float(x), float(y), float(w), float(h)))


def frac(pair):
    return float(Fraction(*pair))


def test_thresholds():
    assert len(COCO_THRESHOLDS) == 10
    assert COCO_THRESHOLDS[0] == 0.5 and COCO_THRESHOLDS[5] == 0.75 and COCO_THRESHOLDS[-1] == 0.95


def test_match_examples():
    g = G(1, 0, 0, 10, 10)
    assert match_greedy([D(0, 0, 10, 10, 0.5)], [g], 0.5)[0][1] is True
    hi, lo = D(0, 0, 10, 10, 0.9), D(0, 0, 10, 9, 0.8)
    out = match_greedy([lo, hi], [g], 0.5)
    assert [(d.score, tp) for d, tp in out] == [(0.9, True), (0.8, False)]
    assert match_greedy([D(0, 0, 10, 6, 0.9)], [g], 0.75)[0][1] is False


def test_match_prefers_highest_iou_gt():
    gts = [G(1, 0, 0, 10, 10), G(2, 2, 0, 10, 10)]
    out = match_greedy([D(2, 0, 10, 10, 0.9), D(0, 0, 10, 10, 0.8)], gts, 0.5)
    assert [tp for _, tp in out] == [True, True]


def test_match_rejects_mixed():
    with pytest.raises(ValueError):
        match_greedy([D(0, 0, 1, 1, 0.5, cat=2)], [G(1, 0, 0, 1, 1)], 0.5)


def test_average_precision_examples():
    assert average_precision([True], 1) == 1.0
    assert average_precision([], 1) == 0.0
    assert average_precision([True, False], 2) == 51 / 101
    assert average_precision([], 0) is None
    assert average_precision([False], 0) == 0.0


@given(st.lists(st.booleans(), max_size=40), st.integers(0, 10))
def test_average_precision_matches_hand_rolled(labels, extra):
    n_gt = sum(labels) + extra
    if n_gt == 0:
        return
    assert average_precision(labels, n_gt) == pytest.approx(interp_ap_101(labels, n_gt), abs=1e-12)


@given(st.lists(st.booleans(), min_size=1, max_size=30), st.integers(0, 5), st.data())
def test_ap_monotone_fp_to_tp(labels, extra, data):
    n_gt = sum(labels) + extra + 1
    fps = [k for k, v in enumerate(labels) if not v]
    if not fps:
        return
    k = data.draw(st.sampled_from(fps))
    better = list(labels)
    better[k] = True
    assert average_precision(better, n_gt) >= average_precision(labels, n_gt) - 1e-15


def load_golden():
    data = json.loads(GOLDEN.read_text())
    return data, parse_dataset(data["annotations"]), parse_results(data["results"])


def test_golden_fixture():
    data, bundle, dets = load_golden()
    res = coco_ap(dets, bundle.annotations, image_ids=bundle.image_ids, category_ids=bundle.category_ids)
    exp = data["expected"]
    assert res.ap == frac(exp["ap"])
    assert res.ap50 == frac(exp["ap50"])
    assert res.ap75 == frac(exp["ap75"])
    worked = exp["worked_two_labels"]
    assert average_precision(worked["labels"], worked["n_gt"]) == frac(worked["ap"])


def test_perfect_and_empty():
    gts = [G(1, 0, 0, 10, 10), G(2, 30, 30, 5, 5, image=2), G(3, 0, 0, 8, 8, cat=2)]
    dets = [Detection(g.image_id, g.category_id, g.bbox, 1.0) for g in gts]
    res = coco_ap(dets, gts)
    assert (res.ap, res.ap50, res.ap75) == (1.0, 1.0, 1.0)
    assert set(res.per_category) == {1, 2}
    empty = coco_ap([], gts)
    assert (empty.ap, empty.ap50, empty.ap75) == (0.0, 0.0, 0.0)
    nothing = coco_ap([], [])
    assert (nothing.ap, nothing.per_category) == (0.0, {})


def test_excluded_categories():
    gts = [G(1, 0, 0, 10, 10)]
    res = coco_ap([D(0, 0, 10, 10, 0.9)], gts, category_ids=[1, 2, 3])
    assert set(res.per_category) == {1}
    assert res.ap == 1.0
    # detections on a category without ground truth count as 0
    res = coco_ap([D(0, 0, 10, 10, 0.9), D(0, 0, 10, 10, 0.9, cat=2)], gts)
    assert res.per_category[2] == (0.0, 0.0, 0.0)
    assert res.ap == 0.5


def test_unknown_references_rejected():
    with pytest.raises(ValueError, match="image_id"):
        coco_ap([D(0, 0, 1, 1, 0.5, image=9)], [G(1, 0, 0, 1, 1)], image_ids=[1])
    with pytest.raises(ValueError, match="category_id"):
        coco_ap([D(0, 0, 1, 1, 0.5, cat=4)], [G(1, 0, 0, 1, 1)], category_ids=[1])


def test_max_dets_cap():
    gts = [G(k, 20 * k, 0, 10, 10) for k in range(5)]
    dets = [D(20 * k, 0, 10, 10, 0.9 - 0.1 * k) for k in range(5)]
    assert coco_ap(dets, gts).ap50 == 1.0
    assert coco_ap(dets, gts, max_dets=2).ap50 == pytest.approx(41 / 101)


@st.composite
def eval_fixture(draw):
    n_img = draw(st.integers(1, 3))
    gts, dets = [], []
    for img in range(1, n_img + 1):
        for _ in range(draw(st.integers(0, 4))):
            x, y = draw(st.integers(0, 30)), draw(st.integers(0, 30))
            gts.append(G(len(gts) + 1, x, y, draw(st.integers(4, 12)), draw(st.integers(4, 12)), image=img,
                         cat=draw(st.sampled_from([1, 2]))))
        for _ in range(draw(st.integers(0, 5))):
            x, y = draw(st.integers(0, 30)), draw(st.integers(0, 30))
            dets.append(D(x, y, draw(st.integers(4, 12)), draw(st.integers(4, 12)),
                          draw(st.sampled_from([0.2, 0.4, 0.6, 0.8, 1.0])), image=img,
                          cat=draw(st.sampled_from([1, 2]))))
    return dets, gts


def _vals(r: EvalResult):
    return (r.ap, r.ap50, r.ap75, r.per_category)


@given(eval_fixture(), st.randoms(), st.sampled_from([1.0, 0.5, 0.25, 0.9]))
def test_coco_ap_invariances(fx, rnd, c):
    dets, gts = fx
    base = coco_ap(dets, gts)
    for v in (base.ap, base.ap50, base.ap75):
        assert 0.0 <= v <= 1.0
    shuffled = list(dets)
    rnd.shuffle(shuffled)
    assert _vals(coco_ap(shuffled, gts)) == _vals(base)
    scaled = [Detection(d.image_id, d.category_id, d.bbox, d.score * c) for d in dets]
    assert _vals(coco_ap(scaled, gts)) == _vals(base)


def _fixture_boxes(rng, n):
    return [[float(rng.integers(0, 8)), float(rng.integers(0, 8)), float(rng.integers(2, 7)), float(rng.integers(2, 7))]
            for _ in range(n)]


def test_greedy_optimal_when_candidates_are_unique():
    """With gt pairs at IoU < 2t-1 no detection can reach t against two gts (Jaccard
    triangle inequality), and greedy then matches every gt that has a candidate."""
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(4000):
        n = int(rng.integers(2, 7))
        nd = int(rng.integers(1, n))
        gb, db = _fixture_boxes(rng, n - nd), _fixture_boxes(rng, nd)
        t = float(rng.choice([0.75, 0.8, 0.9]))
        gts = [G(k, *b) for k, b in enumerate(gb)]
        if any(iou(a.bbox, b.bbox) >= 2 * t - 1 for a in gts for b in gts if a is not b):
            continue
        dets = [D(*b, float(rng.random())) for b in db]
        greedy = sum(tp for _, tp in match_greedy(dets, gts, t))
        assert greedy == exhaustive_max_tp(db, gb, t)
        checked += 1
    assert checked > 1000


def test_greedy_is_not_always_max_tp():
    """COCO's score-ordered matching can lose a TP to a later detection; documented counterexample."""
    gts = [G(1, 0, 0, 1, 1), G(2, 1, 0, 1, 1)]
    dets = [D(0, 0, 2, 1, 0.9), D(0, 0, 1, 1, 0.8)]
    greedy = sum(tp for _, tp in match_greedy(dets, gts, 0.5))
    assert greedy == 1
    assert exhaustive_max_tp([d.bbox.to_list() for d in dets], [g.bbox.to_list() for g in gts], 0.5) == 2


def test_format_table():
    r = EvalResult(0.282, 0.355, 0.297)
    text = format_table([("Ours", r)])
    lines = text.splitlines()
    assert lines[0].split() == ["Method", "AP", "AP50", "AP75"]
    assert lines[1].split() == ["Ours", "28.2", "35.5", "29.7"]
    assert "s/img" in format_table([("x", r)], timing=True)
