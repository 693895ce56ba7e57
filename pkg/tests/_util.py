"""Helpers shared by the test modules (hand-built maps, scene draws, overlap masks)."""
import numpy as np

from panofuse.synth import DegradationSpec, SceneSpec, default_labels, degrade, generate_scene
from panofuse.types import LabelSpace, PanopticMap, SegmentInfo

SKY, CAR = 1, 2
SKY_CAR = LabelSpace.from_kinds(["stuff", "thing"], ["sky", "car"])
LABELS = default_labels()  # 6 stuff (1..6) + 6 thing (7..12)


def pmap(ids, classes, crowd=()):
    """PanopticMap from an id array and ``{segment_id: class_id}``; areas are counted."""
    ids = np.asarray(ids, dtype=np.int64)
    segs = [SegmentInfo(sid, c, int(np.count_nonzero(ids == sid)), sid in crowd)
            for sid, c in classes.items() if np.any(ids == sid)]
    return PanopticMap(ids, tuple(segs))


def random_inputs(seed, size=64, labels=LABELS, max_dets=8):
    """A varied fusion input: noisy or tied logits, jittered and rescored boxes, spurious ones."""
    rng = np.random.default_rng(seed)
    scene = generate_scene(SceneSpec(size, size, labels, rng_seed=seed,
                                     n_things=int(rng.integers(0, 7)),
                                     thing_size_range=(6, 28),
                                     stuff_layout=("bands", "voronoi")[seed % 2]))
    noisy = seed % 4 != 0  # every fourth scene keeps exact ties between channels
    dspec = DegradationSpec(logit_noise_sigma=1.5 if noisy else 0.0,
                            drop_detection_prob=0.15,
                            spurious_detection_prob=0.3,
                            box_jitter_sigma=2.0 if noisy else 0.0,
                            offset_noise_sigma=1.0 if noisy else 0.0,
                            small_stuff_fragments=int(rng.integers(0, 3)),
                            score_range=(0.3, 1.0))
    logits, dets, centers = degrade(scene, dspec, seed, labels)
    return scene, logits, dets[:max_dets], centers


def overlap_mask(dets, shape, class_map=None):
    """Pixels inside >= 2 same-class boxes; restricted to pixels of that class if ``class_map``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    per_class = {}
    for d in dets:
        b = d.box
        inside = (b.x_min <= xs) & (xs < b.x_min + b.width) & (b.y_min <= ys) & (ys < b.y_min + b.height)
        per_class[d.class_id] = per_class.get(d.class_id, 0) + inside.astype(np.int64)
    mask = np.zeros((h, w), dtype=bool)
    for c, count in per_class.items():
        hit = count >= 2
        if class_map is not None:
            hit &= class_map == c
        mask |= hit
    return mask


# --- hand-built PQ cases, one class ("car", id 2) ---------------------------------

def pq_case_match_fp_fn():
    """IoU-0.8 match, one FP, one FN.  Expected PQ = 0.8 / (1 + 0.5 + 0.5) = 0.4."""
    gt = np.zeros((4, 10), np.int64)
    pred = np.zeros((4, 10), np.int64)
    gt[0, :] = 3          # A: 10 px
    pred[0, :8] = 5       # A': 8 px inside A -> IoU 8/10
    gt[2, :] = 4          # B: 10 px, never matched -> FN
    pred[2, :5] = 6       # C: 5 px inside B -> IoU 5/10, not a match -> FP
    return pmap(gt, {3: CAR, 4: CAR}), pmap(pred, {5: CAR, 6: CAR})


def pq_case_half_iou():
    """Prediction covering exactly half of a gt segment: IoU = 4/8 = 0.5."""
    gt = np.zeros((4, 4), np.int64)
    pred = np.zeros((4, 4), np.int64)
    gt[:, :2] = 3
    pred[:, :1] = 7
    return pmap(gt, {3: CAR}), pmap(pred, {7: CAR})


def pq_case_crowd(inside=6):
    """10-px prediction with ``inside`` px on a car crowd region, the rest on a large car segment."""
    gt = np.zeros((6, 10), np.int64)
    gt[0, :] = 9                  # crowd, 10 px
    gt[2:4, :] = 4                # ordinary car, 20 px
    pred = np.zeros((6, 10), np.int64)
    pred[0, :inside] = 5
    pred[2, : 10 - inside] = 5    # 4 px on the car segment: IoU 4/26 with it
    return pmap(gt, {9: CAR, 4: CAR}, crowd={9}), pmap(pred, {5: CAR})
