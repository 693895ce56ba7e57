"""Write a COCO-sized synthetic scene and time ``panofuse bench`` on it per policy.

Defaults match the performance target: 576x864 pixels, 133 classes (53 stuff,
80 thing) and 20 detections. Numba compilation happens in a warm-up call
before any timed run.
"""
import argparse
import json
import tempfile
from pathlib import Path

from panofuse.cli import main as cli_main
from panofuse.head import FusionConfig, fuse
from panofuse.io import write_scene
from panofuse.policies import Policy
from panofuse.synth import DegradationSpec, SceneSpec, default_labels, degrade, generate_scene


def make_scene(out_dir, height, width, n_stuff, n_things, n_dets, seed):
    labels = default_labels(n_stuff, n_things)
    scene = generate_scene(SceneSpec(width, height, labels, rng_seed=seed, n_things=n_dets,
                                     thing_size_range=(24, min(height, width) // 3),
                                     stuff_layout="voronoi", max_stuff_regions=12))
    logits, dets, centers = degrade(scene, DegradationSpec(logit_noise_sigma=1.0, spurious_detection_prob=1.0,
                                                           box_jitter_sigma=2.0, offset_noise_sigma=1.0,
                                                           score_range=(0.3, 1.0)), seed, labels)
    dets = dets[:n_dets]
    write_scene(out_dir, labels, logits, dets, centers, scene.gt)
    return labels, logits, dets, centers


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=576)
    ap.add_argument("--width", type=int, default=864)
    ap.add_argument("--stuff", type=int, default=53)
    ap.add_argument("--things", type=int, default=80)
    ap.add_argument("--detections", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=6)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="bench_report.json")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        scene_dir = Path(tmp) / "scene"
        labels, logits, dets, centers = make_scene(scene_dir, args.height, args.width, args.stuff,
                                                   args.things, args.detections, args.seed)
        report = {}
        for p in Policy:
            fuse(labels, logits, dets, centers, FusionConfig(policy=p))
            part = Path(tmp) / f"{p.value}.json"
            cli_main(["bench", "--scene-dir", str(scene_dir), "--policy", p.value,
                      "--repeat", str(args.repeat), "--out", str(part)])
            report[p.value] = json.loads(part.read_text())
    Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
