"""AP50 and cluster coverage of the reference scene as the crop budget grows.

    python3 scripts/sweep_crop_budget.py --seeds 40-49 --budgets 0,1,2,4,8
"""
from __future__ import annotations

import argparse
import dataclasses

import numpy as np

from scmcrop.scm import SCMConfig
from scmcrop.simulate import acceptance_detector, acceptance_scene, run_scene


def seed_range(text: str) -> list[int]:
    lo, _, hi = text.partition("-")
    return list(range(int(lo), int(hi or lo) + 1))


def coverage(run, n_clustered: int) -> float:
    clustered = [g for g in run.gts if g.annotation_id <= n_clustered]
    hit = sum(any(p.source.contains_point(*g.bbox.center) for p in run.plans) for g in clustered)
    return hit / max(len(clustered), 1)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=seed_range, default=seed_range("40-49"))
    ap.add_argument("--budgets", default="0,1,2,3,4,6,8")
    ap.add_argument("--s50", type=float, default=24.0)
    args = ap.parse_args()

    print(f"{'budget':>6}  {'coarse AP50':>11}  {'fused AP50':>10}  {'gain':>6}  {'coverage':>8}")
    for budget in (int(b) for b in args.budgets.split(",")):
        cfg = dataclasses.replace(SCMConfig(), crop_budget=budget)
        rows = []
        for seed in args.seeds:
            scene = acceptance_scene(seed)
            run = run_scene(scene, acceptance_detector(seed, args.s50), cfg)
            n_clustered = sum(c.count for c in scene.clusters)
            rows.append((run.coarse_eval.ap50, run.fused_eval.ap50, coverage(run, n_clustered)))
        c, f, cov = np.mean(rows, axis=0)
        print(f"{budget:>6}  {100 * c:>11.1f}  {100 * f:>10.1f}  {100 * (f - c):>6.1f}  {100 * cov:>7.1f}%")


if __name__ == "__main__":
    main()
