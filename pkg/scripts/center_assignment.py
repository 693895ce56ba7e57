"""Closest-center accuracy on same-class overlaps as offset noise grows.

For each noise level, fuses synthetic scenes with the closest-center policy
and reports the fraction of pixels inside two or more same-class ground-truth
boxes that end up in the right instance. Highest-confidence and
smallest-first are reported alongside for comparison (ground-truth boxes all
score 1.0, so highest-confidence falls back to input order).
"""
import argparse
import json
from pathlib import Path

import numpy as np

from panofuse.head import FusionConfig, fuse
from panofuse.metrics import same_class_overlap
from panofuse.policies import Policy
from panofuse.synth import DegradationSpec, SceneSpec, default_labels, degrade, generate_scene


def run(sigmas, n_scenes, size):
    labels = default_labels(2, 2)
    rows = []
    for sigma in sigmas:
        hits = {p.value: 0 for p in Policy}
        total = 0
        for seed in range(n_scenes):
            scene = generate_scene(SceneSpec(size, size, labels, rng_seed=seed, n_things=8,
                                             thing_size_range=(size // 6, size // 2)))
            logits, dets, centers = degrade(scene, DegradationSpec(offset_noise_sigma=sigma), seed, labels)
            mask = same_class_overlap(scene.gt_dets, scene.gt.shape, scene.gt.class_map())
            total += int(mask.sum())
            for p in Policy:
                out = fuse(labels, logits, dets, centers, FusionConfig(policy=p))
                hits[p.value] += int(np.sum(out.ids[mask] == scene.gt.ids[mask]))
        rows.append({"sigma": sigma, "overlap_pixels": total,
                     "accuracy": {k: v / total for k, v in hits.items()}})
        print(f"sigma {sigma:5.2f}: " + "  ".join(f"{k} {v / total:.4f}" for k, v in hits.items())
              + f"  ({total} px)")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0, 0.5, 1, 2, 4, 8])
    ap.add_argument("--scenes", type=int, default=200)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--out", help="write the table as JSON")
    args = ap.parse_args()
    rows = run(args.sigmas, args.scenes, args.size)
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()
