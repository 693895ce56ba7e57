"""Parameter-free panoptic head.

The head builds instance-aware logits from the semantic logits and the
detections: every stuff channel is kept as is, and every detection adds a
copy of its class channel cropped to its box (minus infinity outside). A
per-pixel argmax over that stack gives the panoptic assignment. Thing
regions nobody detected lose to the best stuff class, and detections whose
class logit is weak inside the box end up with no pixels at all.

Channel order, which decides exact ties between different channels, is: stuff
channels by class id, then one channel per detection in input order. When the
winner is a thing channel, all same-class detections covering the pixel hold
the same value and the configured :class:`~panofuse.policies.Policy` picks
the owner.

Segment ids are stable: a stuff class ``c`` gets id ``c``, the thing segment
of input detection ``i`` gets id ``num_classes + 1 + i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from panofuse import _kernels
from panofuse import postprocess
from panofuse.errors import DimensionMismatch, MissingCenters, NoStuffClasses, ValidationError
from panofuse.policies import (
    Policy,
    assign_by_order,
    assign_closest_center,
    priority_order,
)
from panofuse.types import (
    Detection,
    LabelSpace,
    PanopticMap,
    SegmentInfo,
    build_segments,
    semantic_argmax,
)


@dataclass(frozen=True)
class FusionConfig:
    score_threshold: float = 0.4
    policy: Policy = Policy.HIGHEST_CONFIDENCE
    unknown_mode: bool = False
    # 0 disables small-stuff removal
    stuff_area_threshold: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValidationError(f"score_threshold must be in [0, 1], got {self.score_threshold}")
        if self.stuff_area_threshold < 0:
            raise ValidationError("stuff_area_threshold must be non-negative")


def filter_detections(dets: Sequence[Detection], threshold: float) -> List[Detection]:
    """Detections with ``score >= threshold``, input order preserved."""
    return [d for d in dets if d.score >= threshold]


def _kept(dets, threshold) -> List[Tuple[int, Detection]]:
    return [(i, d) for i, d in enumerate(dets) if d.score >= threshold]


def thing_segment_id(labels: LabelSpace, det_index: int) -> int:
    return labels.num_classes + 1 + det_index


def _check(labels, logits, centers, cfg):
    if logits.ndim != 3 or logits.shape[0] != labels.num_classes:
        raise DimensionMismatch(f"logits shape {logits.shape} does not match label space")
    if not labels.stuff_ids:
        raise NoStuffClasses("fusion needs at least one stuff class")
    if cfg.policy is Policy.CLOSEST_CENTER:
        if centers is None:
            raise MissingCenters("closest-center policy needs a center field")
        if centers.shape != (2,) + logits.shape[1:]:
            raise DimensionMismatch(f"centers shape {centers.shape} vs logits {logits.shape}")


def _segments_from_counts(labels, dets, counts) -> Tuple[SegmentInfo, ...]:
    segments = []
    n_cls = labels.num_classes
    for sid in np.flatnonzero(counts).tolist():
        area = int(counts[sid])
        if sid <= n_cls:
            segments.append(SegmentInfo(sid, sid, area))
        else:
            i = sid - n_cls - 1
            segments.append(SegmentInfo(sid, dets[i].class_id, area, source_detection=i))
    return tuple(segments)


def assign(labels: LabelSpace, logits: np.ndarray, dets: Sequence[Detection],
           centers: Optional[np.ndarray] = None, cfg: FusionConfig = FusionConfig()) -> PanopticMap:
    """Fused map before post-processing (fast path).

    Inputs are assumed to have passed :func:`panofuse.types.validate_inputs`;
    only cheap shape checks are repeated here.
    """
    logits = np.asarray(logits)
    _check(labels, logits, centers, cfg)
    _, h, w = logits.shape
    flat = np.ascontiguousarray(logits).reshape(logits.shape[0], h * w)
    stuff = np.asarray(labels.stuff_ids, dtype=np.int64)
    best_stuff, stuff_idx = _kernels.channel_argmax(flat, stuff - 1)

    kept = _kept(dets, cfg.score_threshold)
    k = len(kept)
    det_ch = np.array([d.class_id - 1 for _, d in kept], dtype=np.int64)
    ranges = np.array([d.box.pixel_ranges(h, w) for _, d in kept], dtype=np.int64).reshape(k, 4)
    use_centers = cfg.policy is Policy.CLOSEST_CENTER
    if use_centers:
        priority = np.arange(k, dtype=np.int64)
        offsets = np.ascontiguousarray(centers).reshape(2, h * w)
        det_centers = np.array([d.box.center() for _, d in kept], dtype=np.float64).reshape(k, 2)
    else:
        priority = np.array(priority_order([d for _, d in kept], cfg.policy), dtype=np.int64)
        offsets = np.zeros((2, 1))
        det_centers = np.zeros((k, 2))
    owner = _kernels.assign_things(flat, w, best_stuff, det_ch, ranges, use_centers,
                                   priority, offsets, det_centers)

    det_segment_id = np.array([thing_segment_id(labels, i) for i, _ in kept], dtype=np.int64)
    n_ids = labels.num_classes + 1 + len(dets)
    ids, counts = _kernels.compose_ids(owner, stuff_idx, stuff, det_segment_id, n_ids)
    ids = ids.reshape(h, w)
    ids.setflags(write=False)
    return PanopticMap(ids, _segments_from_counts(labels, dets, counts))


def apply_postprocess(pmap: PanopticMap, labels: LabelSpace, logits: np.ndarray,
                      cfg: FusionConfig):
    """Unknown mode, then small-stuff removal, as enabled in ``cfg``."""
    report = postprocess.PostprocessReport()
    if cfg.unknown_mode:
        pmap, r = postprocess.apply_unknown_mode(pmap, semantic_argmax(logits), labels)
        report = report + r
    if cfg.stuff_area_threshold > 0:
        pmap, r = postprocess.remove_small_stuff(pmap, cfg.stuff_area_threshold, labels)
        report = report + r
    return pmap, report


def fuse(labels: LabelSpace, logits: np.ndarray, dets: Sequence[Detection],
         centers: Optional[np.ndarray] = None, cfg: FusionConfig = FusionConfig()) -> PanopticMap:
    """Fuse semantic logits and detections into a non-overlapping panoptic map."""
    pmap = assign(labels, logits, dets, centers, cfg)
    return apply_postprocess(pmap, labels, logits, cfg)[0]


def instance_logits(labels: LabelSpace, logits: np.ndarray, kept: Sequence[Detection]) -> np.ndarray:
    """Dense instance-aware logit stack: stuff channels, then one cropped channel per detection."""
    _, h, w = logits.shape
    stuff = labels.stuff_ids
    y = np.full((len(stuff) + len(kept), h, w), -np.inf, dtype=np.float64)
    y[: len(stuff)] = logits[np.asarray(stuff) - 1]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    for k, d in enumerate(kept):
        b = d.box
        inside = ((b.x_min <= xs + 0.5) & (xs + 0.5 < b.x_min + b.width)
                  & (b.y_min <= ys + 0.5) & (ys + 0.5 < b.y_min + b.height))
        y[len(stuff) + k][inside] = logits[d.class_id - 1][inside]
    return y


def fuse_bruteforce(labels: LabelSpace, logits: np.ndarray, dets: Sequence[Detection],
                    centers: Optional[np.ndarray] = None,
                    cfg: FusionConfig = FusionConfig()) -> PanopticMap:
    """Reference implementation: materialize the full logit stack and argmax it.

    Slow; meant for images up to about 128x128 and for checking :func:`fuse`.
    """
    logits = np.asarray(logits)
    _check(labels, logits, centers, cfg)
    kept = _kept(dets, cfg.score_threshold)
    kept_dets = [d for _, d in kept]
    stuff = labels.stuff_ids
    ns = len(stuff)

    y = instance_logits(labels, logits, kept_dets)
    winner = np.argmax(y, axis=0)
    ids = np.empty(winner.shape, dtype=np.int64)
    is_stuff = winner < ns
    ids[is_stuff] = np.asarray(stuff)[winner[is_stuff]]

    det_cls = np.array([d.class_id for d in kept_dets], dtype=np.int64)
    if cfg.policy is not Policy.CLOSEST_CENTER:
        order = priority_order(kept_dets, cfg.policy)
    for yy, xx in np.argwhere(~is_stuff):
        yy, xx = int(yy), int(xx)
        col = y[ns:, yy, xx]
        top = y[winner[yy, xx], yy, xx]
        cls = det_cls[winner[yy, xx] - ns]
        candidates = np.flatnonzero((col == top) & (det_cls == cls)).tolist()
        if cfg.policy is Policy.CLOSEST_CENTER:
            k = assign_closest_center((xx, yy), candidates, kept_dets, centers)
        else:
            k = assign_by_order((xx, yy), candidates, order)
        ids[yy, xx] = thing_segment_id(labels, kept[k][0])

    meta = {c: SegmentInfo(c, c, 0) for c in stuff}
    for i, d in kept:
        sid = thing_segment_id(labels, i)
        meta[sid] = SegmentInfo(sid, d.class_id, 0, source_detection=i)
    pmap = PanopticMap(ids, build_segments(ids, meta))
    return apply_postprocess(pmap, labels, logits, cfg)[0]
