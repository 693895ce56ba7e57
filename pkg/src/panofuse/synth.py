"""Synthetic scenes and simulated branch outputs.

A scene is a ground-truth panoptic map built from stuff regions (horizontal
bands or a Voronoi partition) with thing shapes (rectangles and ellipses)
painted on top, later shapes occluding earlier ones. From it we derive what a
perfect network would output (tight boxes with score 1, exact center offsets)
and :func:`degrade` turns that into noisy logits, detections and offsets.

Randomness comes from numpy's PCG64 bit generator (``np.random.Generator``
seeded with the integer seed), so a seed reproduces a scene bit for bit on
any platform running the same numpy major version.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from panofuse.errors import InfeasibleSpec, ValidationError
from panofuse.types import BoundingBox, Detection, LabelSpace, PanopticMap, SegmentInfo, build_segments

MAX_PLACEMENT_ATTEMPTS = 200
MAX_SCENE_ATTEMPTS = 50


class StuffLayout(str, enum.Enum):
    HORIZONTAL_BANDS = "bands"
    VORONOI = "voronoi"


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    labels: LabelSpace
    rng_seed: int = 0
    n_things: int = 4
    thing_size_range: Tuple[int, int] = (8, 24)
    allow_same_class_overlap: bool = True
    stuff_layout: StuffLayout = StuffLayout.HORIZONTAL_BANDS
    # number of stuff regions is drawn from [1, max_stuff_regions]
    max_stuff_regions: int = 4
    # minimum height (rows) of each band in the bands layout
    min_band_height: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stuff_layout", StuffLayout(self.stuff_layout))
        object.__setattr__(self, "thing_size_range", tuple(int(v) for v in self.thing_size_range))
        lo, hi = self.thing_size_range
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("scene size must be positive")
        if not 1 <= lo <= hi:
            raise ValidationError(f"bad thing_size_range {self.thing_size_range}")
        if not self.labels.stuff_ids:
            raise ValidationError("scene needs at least one stuff class")
        if self.n_things > 0 and not self.labels.thing_ids:
            raise ValidationError("n_things > 0 but the label space has no thing classes")
        if self.min_band_height < 1 or self.min_band_height > self.height:
            raise ValidationError("min_band_height must be in [1, height]")
        if self.n_things < 0 or self.max_stuff_regions < 1:
            raise ValidationError("n_things must be >= 0 and max_stuff_regions >= 1")


@dataclass(frozen=True)
class DegradationSpec:
    logit_noise_sigma: float = 0.0
    logit_margin: float = 4.0
    drop_detection_prob: float = 0.0
    spurious_detection_prob: float = 0.0
    box_jitter_sigma: float = 0.0
    offset_noise_sigma: float = 0.0
    small_stuff_fragments: int = 0
    fragment_size: int = 4
    # scores of surviving true detections are drawn uniformly from this range
    score_range: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "score_range", tuple(float(v) for v in self.score_range))
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"bad score_range {self.score_range}")
        if self.logit_margin <= 0:
            raise ValidationError("logit_margin must be positive")
        for name in ("logit_noise_sigma", "box_jitter_sigma", "offset_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        for name in ("drop_detection_prob", "spurious_detection_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.small_stuff_fragments < 0 or self.fragment_size < 1:
            raise ValidationError("bad fragment settings")


class Scene(NamedTuple):
    gt: PanopticMap
    gt_sem: np.ndarray
    gt_dets: List[Detection]
    gt_centers: np.ndarray


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _stuff_layer(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    stuff = np.asarray(spec.labels.stuff_ids)
    n = int(rng.integers(1, min(spec.max_stuff_regions, len(stuff)) + 1))
    if spec.stuff_layout is StuffLayout.HORIZONTAL_BANDS:
        m = spec.min_band_height
        n = min(n, h // m)
        classes = rng.choice(stuff, size=n, replace=False)
        if n == 1:
            cuts = []
        elif m == 1:
            cuts = np.sort(rng.choice(np.arange(1, h), size=n - 1, replace=False))
        else:
            slack = np.sort(rng.integers(0, h - n * m + 1, size=n - 1))
            cuts = slack + m * np.arange(1, n)
        rows = np.searchsorted(np.asarray(cuts), np.arange(h), side="right")
        return np.broadcast_to(classes[rows][:, None], (h, w)).copy()
    seeds = np.stack([rng.uniform(0, w, n), rng.uniform(0, h, n)], axis=1)
    classes = rng.choice(stuff, size=n, replace=True)
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    d2 = (xs[None] - seeds[:, 0, None, None]) ** 2 + (ys[None] - seeds[:, 1, None, None]) ** 2
    return classes[np.argmin(d2, axis=0)]


def _shape_mask(rng, w, h):
    if rng.random() < 0.5:
        return np.ones((h, w), dtype=bool)
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    return ((xs - w / 2) / (w / 2)) ** 2 + ((ys - h / 2) / (h / 2)) ** 2 <= 1.0


def _overlaps(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _try_scene(spec: SceneSpec, rng: np.random.Generator) -> Optional[Scene]:
    labels = spec.labels
    h, w = spec.height, spec.width
    sem = _stuff_layer(spec, rng)
    ids = sem.astype(np.int64)  # stuff segment id == class id
    lo, hi = spec.thing_size_range
    placed = []  # (class_id, (x, y, w, h))
    for t in range(spec.n_things):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            cls = int(rng.choice(labels.thing_ids))
            bw = int(min(rng.integers(lo, hi + 1), w))
            bh = int(min(rng.integers(lo, hi + 1), h))
            x0 = int(rng.integers(0, w - bw + 1))
            y0 = int(rng.integers(0, h - bh + 1))
            box = (x0, y0, bw, bh)
            same = [b for c, b in placed if c == cls]
            if not spec.allow_same_class_overlap and any(_overlaps(box, b) for b in same):
                continue
            mask = _shape_mask(rng, bw, bh)
            break
        else:
            raise InfeasibleSpec(f"could not place thing {t} after {MAX_PLACEMENT_ATTEMPTS} attempts")
        tmp_id = labels.num_classes + 1 + t
        region = ids[y0:y0 + bh, x0:x0 + bw]
        region[mask] = tmp_id
        sem[y0:y0 + bh, x0:x0 + bw][mask] = cls
        placed.append((cls, box))

    gt_dets = []
    remap = {}
    centers = np.zeros((2, h, w), dtype=np.float32)
    seen_centers = set()
    for t, (cls, _) in enumerate(placed):
        tmp_id = labels.num_classes + 1 + t
        ys, xs = np.nonzero(ids == tmp_id)
        if ys.size == 0:
            continue
        box = BoundingBox(xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)
        cx, cy = box.center()
        if (cls, cx, cy) in seen_centers:
            return None
        seen_centers.add((cls, cx, cy))
        remap[tmp_id] = labels.num_classes + 1 + len(gt_dets)
        centers[0, ys, xs] = cx - (xs + 0.5)
        centers[1, ys, xs] = cy - (ys + 0.5)
        gt_dets.append(Detection(cls, box, 1.0))

    lut = np.arange(labels.num_classes + 1 + len(placed), dtype=np.int64)
    for old, new in remap.items():
        lut[old] = new
    ids = lut[ids]
    meta = {c: SegmentInfo(c, c, 0) for c in labels.stuff_ids}
    for j, d in enumerate(gt_dets):
        sid = labels.num_classes + 1 + j
        meta[sid] = SegmentInfo(sid, d.class_id, 0, source_detection=j)
    gt = PanopticMap(ids, build_segments(ids, meta))
    sem.setflags(write=False)
    centers.setflags(write=False)
    return Scene(gt, sem, gt_dets, centers)


def generate_scene(spec: SceneSpec) -> Scene:
    """Ground-truth map, semantic map, tight score-1 boxes and exact center offsets.

    Same-class things always end up with distinct box centers (scenes that
    violate this are redrawn from the same random stream).
    """
    rng = make_rng(spec.rng_seed)
    for _ in range(MAX_SCENE_ATTEMPTS):
        scene = _try_scene(spec, rng)
        if scene is not None:
            return scene
    raise InfeasibleSpec("could not draw a scene with distinct same-class box centers")


def _plant_fragments(logits, sem, labels, dspec, rng):
    size = dspec.fragment_size
    h, w = sem.shape
    if size > h or size > w:
        return
    stuff = labels.stuff_ids
    is_thing = labels.thing_mask()
    absent = [c for c in stuff if not np.any(sem == c)]
    for _ in range(dspec.small_stuff_fragments):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            y0 = int(rng.integers(0, h - size + 1))
            x0 = int(rng.integers(0, w - size + 1))
            patch = sem[y0:y0 + size, x0:x0 + size]
            base = int(patch[0, 0])
            if is_thing[base] or not np.all(patch == base):
                continue
            pool = absent or [c for c in stuff if c != base]
            if not pool:
                return
            cls = int(rng.choice(pool))
            logits[cls - 1, y0:y0 + size, x0:x0 + size] = 2 * dspec.logit_margin
            break


def degrade(scene: Scene, dspec: DegradationSpec, rng_seed: int, labels: LabelSpace):
    """Simulated branch outputs ``(logits, detections, centers)`` for a scene.

    * logits: one-hot ground truth times ``logit_margin`` plus Gaussian noise,
      with optional small square islands of a wrong stuff class;
    * detections: ground-truth boxes, each dropped with ``drop_detection_prob``,
      jittered, and rescored from ``score_range``; each ground-truth thing also spawns a spurious detection
      (random thing class, box and score in [0, 1)) with
      ``spurious_detection_prob``; spurious ones are appended at the end;
    * centers: exact offsets plus Gaussian noise.
    """
    rng = make_rng(rng_seed)
    sem = np.asarray(scene.gt_sem)
    h, w = sem.shape
    logits = np.zeros((labels.num_classes, h, w), dtype=np.float32)
    valid = sem > 0
    ys, xs = np.nonzero(valid)
    logits[sem[valid] - 1, ys, xs] = dspec.logit_margin
    if dspec.logit_noise_sigma > 0:
        logits += rng.normal(0.0, dspec.logit_noise_sigma, logits.shape).astype(np.float32)
    if dspec.small_stuff_fragments:
        _plant_fragments(logits, sem, labels, dspec, rng)

    dets = []
    for d in scene.gt_dets:
        if dspec.drop_detection_prob > 0 and rng.random() < dspec.drop_detection_prob:
            continue
        box = d.box
        if dspec.box_jitter_sigma > 0:
            j = rng.normal(0.0, dspec.box_jitter_sigma, 4)
            box = BoundingBox(box.x_min + j[0], box.y_min + j[1],
                              max(1.0, box.width + j[2]), max(1.0, box.height + j[3]))
        lo, hi = dspec.score_range
        score = d.score if lo == hi == 1.0 else float(rng.uniform(lo, hi))
        dets.append(Detection(d.class_id, box, score))
    if dspec.spurious_detection_prob > 0 and labels.thing_ids:
        for _ in scene.gt_dets:
            if rng.random() >= dspec.spurious_detection_prob:
                continue
            cls = int(rng.choice(labels.thing_ids))
            bw = float(rng.uniform(2, max(3.0, w / 2)))
            bh = float(rng.uniform(2, max(3.0, h / 2)))
            box = BoundingBox(rng.uniform(0, w - bw), rng.uniform(0, h - bh), bw, bh)
            dets.append(Detection(cls, box, float(rng.random())))

    centers = np.array(scene.gt_centers, dtype=np.float32)
    if dspec.offset_noise_sigma > 0:
        centers += rng.normal(0.0, dspec.offset_noise_sigma, centers.shape).astype(np.float32)
    return logits, dets, centers


def default_labels(n_stuff: int = 6, n_things: int = 6) -> LabelSpace:
    """Stuff classes first, then thing classes."""
    names = [f"stuff_{i}" for i in range(n_stuff)] + [f"thing_{i}" for i in range(n_things)]
    return LabelSpace.from_kinds(["stuff"] * n_stuff + ["thing"] * n_things, names)
