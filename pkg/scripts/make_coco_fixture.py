"""Regenerate the COCO-panoptic fixture in tests/data/coco/.

The fixture is one 48x64 image laid out by hand: sky over road, two people,
a car, a crowd of people and a void seam, using real COCO panoptic category
ids (non-contiguous) and RGB-encoded segment ids as in the official release.
"""
import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

CATEGORIES = [
    {"id": 1, "name": "person", "supercategory": "person", "isthing": 1, "color": [220, 20, 60]},
    {"id": 3, "name": "car", "supercategory": "vehicle", "isthing": 1, "color": [0, 0, 142]},
    {"id": 149, "name": "road", "supercategory": "ground", "isthing": 0, "color": [128, 64, 128]},
    {"id": 187, "name": "sky-other-merged", "supercategory": "sky", "isthing": 0, "color": [70, 130, 180]},
]


def rgb_id(r, g, b):
    return r + 256 * g + 65536 * b


def build():
    h, w = 48, 64
    ids = np.zeros((h, w), np.int64)
    segs = []

    def paint(mask, seg_id, cat, crowd=0):
        ids[mask] = seg_id
        segs.append({"id": seg_id, "category_id": cat, "iscrowd": crowd})

    ys, xs = np.mgrid[0:h, 0:w]
    paint(ys < 20, rgb_id(70, 130, 180), 187)
    paint(ys >= 21, rgb_id(128, 64, 128), 149)          # row 20 stays void
    paint((ys >= 24) & (ys < 40) & (xs >= 4) & (xs < 10), rgb_id(220, 20, 60), 1)
    paint((ys >= 26) & (ys < 42) & (xs >= 12) & (xs < 17), rgb_id(221, 20, 60), 1)
    car = ((ys >= 30) & (ys < 44) & (xs >= 22) & (xs < 44)) & ~((ys < 33) & (xs < 25))
    paint(car, rgb_id(0, 0, 142), 3)
    paint((ys >= 22) & (ys < 30) & (xs >= 48) & (xs < 62), rgb_id(220, 21, 61), 1, crowd=1)

    for s in segs:
        ys_, xs_ = np.nonzero(ids == s["id"])
        s["area"] = int(ys_.size)
        s["bbox"] = [int(xs_.min()), int(ys_.min()), int(xs_.max() - xs_.min() + 1),
                     int(ys_.max() - ys_.min() + 1)]
    rgb = np.stack([ids % 256, ids // 256 % 256, ids // 65536], axis=-1).astype(np.uint8)
    doc = {
        "info": {"description": "hand-built panoptic fixture"},
        "images": [{"id": 1, "file_name": "fixture_000001.jpg", "height": h, "width": w}],
        "annotations": [{"image_id": 1, "file_name": "fixture_000001.png", "segments_info": segs}],
        "categories": CATEGORIES,
    }
    return rgb, doc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=str(Path(__file__).resolve().parents[1] / "tests/data/coco"))
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rgb, doc = build()
    Image.fromarray(rgb).save(out / "fixture_000001.png")
    (out / "fixture_000001.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote fixture to {out}")


if __name__ == "__main__":
    main()
