"""Panoptic quality and mean IoU.

Matching follows the COCO panoptic reference rules:

* a (gt, pred) pair of the same class matches when IoU > 0.5, where pixels
  the prediction puts on ground-truth void are left out of the union;
* crowd ground-truth segments are never matched and never count as FN;
* an unmatched prediction is not an FP when more than half of it lies on
  ground-truth void plus crowd regions of its own class.

Per-class sums of IoU are kept exactly (as a sum of the float IoUs in rational
arithmetic), so accumulating images in any order or in shards gives
bit-identical scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from panofuse.errors import DimensionMismatch, UnknownClass
from panofuse.types import VOID_ID, Detection, LabelSpace, PanopticMap


@dataclass(frozen=True)
class Match:
    gt_id: int
    pred_id: int
    class_id: int
    iou: float


@dataclass
class MatchResult:
    matches: List[Match] = field(default_factory=list)
    unmatched_gt: List[Tuple[int, int]] = field(default_factory=list)  # (segment_id, class_id), the FNs
    unmatched_pred: List[Tuple[int, int]] = field(default_factory=list)  # the FPs
    # unmatched predictions excused because they mostly cover void / crowd
    ignored_pred: List[Tuple[int, int]] = field(default_factory=list)


def _pair_counts(gt_ids: np.ndarray, pred_ids: np.ndarray) -> Dict[Tuple[int, int], int]:
    offset = int(pred_ids.max(initial=0)) + 1
    joint = gt_ids.astype(np.int64).ravel() * offset + pred_ids.astype(np.int64).ravel()
    keys, counts = np.unique(joint, return_counts=True)
    return {(int(k // offset), int(k % offset)): int(n) for k, n in zip(keys, counts)}


def match_segments(gt: PanopticMap, pred: PanopticMap, labels: LabelSpace) -> MatchResult:
    if gt.shape != pred.shape:
        raise DimensionMismatch(f"gt {gt.shape} vs prediction {pred.shape}")
    gt_segs = gt.segment_dict()
    pred_segs = pred.segment_dict()
    for s in list(gt_segs.values()) + list(pred_segs.values()):
        if s.class_id not in labels:
            raise UnknownClass(f"segment {s.segment_id} has unknown class {s.class_id}")
    inter = _pair_counts(gt.ids, pred.ids)

    result = MatchResult()
    gt_matched, pred_matched = set(), set()
    for (g, p), n in sorted(inter.items()):
        if g == VOID_ID or p == VOID_ID:
            continue
        gs, ps = gt_segs[g], pred_segs[p]
        if gs.is_crowd or gs.class_id != ps.class_id:
            continue
        union = ps.area + gs.area - n - inter.get((VOID_ID, p), 0)
        if 2 * n > union:
            assert g not in gt_matched and p not in pred_matched, "IoU > 0.5 matches must be unique"
            gt_matched.add(g)
            pred_matched.add(p)
            result.matches.append(Match(g, p, gs.class_id, n / union))

    crowd_by_class: Dict[int, List[int]] = {}
    for g, s in gt_segs.items():
        if s.is_crowd:
            crowd_by_class.setdefault(s.class_id, []).append(g)
        elif g not in gt_matched:
            result.unmatched_gt.append((g, s.class_id))

    for p, s in pred_segs.items():
        if p in pred_matched:
            continue
        covered = inter.get((VOID_ID, p), 0)
        covered += sum(inter.get((g, p), 0) for g in crowd_by_class.get(s.class_id, ()))
        if 2 * covered > s.area:
            result.ignored_pred.append((p, s.class_id))
        else:
            result.unmatched_pred.append((p, s.class_id))
    return result


@dataclass
class ClassStat:
    iou_sum: Fraction = Fraction(0)
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ClassStat") -> "ClassStat":
        return ClassStat(self.iou_sum + other.iou_sum, self.tp + other.tp,
                         self.fp + other.fp, self.fn + other.fn)

    @property
    def denominator(self) -> float:
        return self.tp + 0.5 * self.fp + 0.5 * self.fn

    def pq(self) -> Optional[float]:
        d = self.denominator
        return float(self.iou_sum) / d if d else None


@dataclass
class PqAccumulator:
    per_class: Dict[int, ClassStat] = field(default_factory=dict)
    n_images: int = 0

    def add(self, match: MatchResult) -> "PqAccumulator":
        """Fold one image's matching into the accumulator (in place)."""
        stats = self.per_class
        for m in match.matches:
            s = stats.setdefault(m.class_id, ClassStat())
            s.iou_sum += Fraction(m.iou)
            s.tp += 1
        for _, c in match.unmatched_gt:
            stats.setdefault(c, ClassStat()).fn += 1
        for _, c in match.unmatched_pred:
            stats.setdefault(c, ClassStat()).fp += 1
        self.n_images += 1
        return self


def merge_accumulators(a: PqAccumulator, b: PqAccumulator) -> PqAccumulator:
    per_class = {c: ClassStat() + s for c, s in a.per_class.items()}
    for c, s in b.per_class.items():
        per_class[c] = per_class.get(c, ClassStat()) + s
    return PqAccumulator(per_class, a.n_images + b.n_images)


@dataclass
class PqScores:
    pq: Optional[float]
    pq_things: Optional[float]
    pq_stuff: Optional[float]
    per_class: Dict[int, ClassStat]
    n_images: int = 0

    def to_dict(self, labels: Optional[LabelSpace] = None) -> dict:
        rows = []
        for c in sorted(self.per_class):
            s = self.per_class[c]
            row = {"class_id": c, "pq": s.pq(), "iou_sum": float(s.iou_sum),
                   "tp": s.tp, "fp": s.fp, "fn": s.fn}
            if labels is not None and c in labels:
                row["name"] = labels.name(c)
                row["kind"] = labels.kind(c).value
            rows.append(row)
        return {"pq": self.pq, "pq_things": self.pq_things, "pq_stuff": self.pq_stuff,
                "n_images": self.n_images, "per_class": rows}


def _mean(values: List[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def compute_pq(acc: PqAccumulator, labels: LabelSpace) -> PqScores:
    """PQ averaged over classes with a nonzero denominator, plus the thing/stuff splits.

    A split with no such class is ``None``.
    """
    all_, things, stuff = [], [], []
    for c in sorted(acc.per_class):
        v = acc.per_class[c].pq()
        if v is None:
            continue
        all_.append(v)
        (things if labels.is_thing(c) else stuff).append(v)
    return PqScores(_mean(all_), _mean(things), _mean(stuff),
                    {c: ClassStat() + s for c, s in acc.per_class.items()}, acc.n_images)


def evaluate_pq(pairs: Iterable[Tuple[PanopticMap, PanopticMap]], labels: LabelSpace) -> PqScores:
    """PQ over ``(gt, pred)`` pairs."""
    acc = PqAccumulator()
    for gt, pred in pairs:
        acc.add(match_segments(gt, pred, labels))
    return compute_pq(acc, labels)


def confusion_matrix(gt_sem: np.ndarray, pred_sem: np.ndarray, num_classes: int) -> np.ndarray:
    """``(N+1) x (N+1)`` counts, rows = gt, cols = prediction, index 0 = void.

    Pixels with void ground truth are dropped; void predictions land in column 0.
    """
    gt_sem = np.asarray(gt_sem)
    pred_sem = np.asarray(pred_sem)
    if gt_sem.shape != pred_sem.shape:
        raise DimensionMismatch(f"gt {gt_sem.shape} vs prediction {pred_sem.shape}")
    n = num_classes + 1
    keep = gt_sem != VOID_ID
    g = gt_sem[keep].astype(np.int64)
    p = pred_sem[keep].astype(np.int64)
    if g.size and (g.max() >= n or p.max() >= n or g.min() < 0 or p.min() < 0):
        raise UnknownClass("semantic map contains a class id outside the label space")
    return np.bincount(g * n + p, minlength=n * n).reshape(n, n)


def miou_from_confusion(cm: np.ndarray) -> float:
    """Mean IoU over classes present in gt or prediction (void excluded); NaN if none."""
    cm = cm.astype(np.float64)
    tp = np.diag(cm)[1:]
    union = cm.sum(axis=1)[1:] + cm.sum(axis=0)[1:] - tp
    present = union > 0
    if not present.any():
        return float("nan")
    return float(np.mean(tp[present] / union[present]))


def compute_miou(gt_sem: np.ndarray, pred_sem: np.ndarray, labels: LabelSpace) -> float:
    return miou_from_confusion(confusion_matrix(gt_sem, pred_sem, labels.num_classes))


def same_class_overlap(dets: Sequence[Detection], shape: Tuple[int, int],
                       class_map: Optional[np.ndarray] = None) -> np.ndarray:
    """Pixels inside two or more boxes of one class.

    With ``class_map`` a pixel only counts for the class it actually has, which
    is the population the closest-center accuracy is measured on.
    """
    h, w = shape
    counts: Dict[int, np.ndarray] = {}
    for d in dets:
        y0, y1, x0, x1 = d.box.pixel_ranges(h, w)
        c = counts.setdefault(d.class_id, np.zeros((h, w), np.int32))
        c[y0:y1, x0:x1] += 1
    mask = np.zeros((h, w), dtype=bool)
    for cls, c in counts.items():
        hit = c >= 2
        if class_map is not None:
            hit &= np.asarray(class_map) == cls
        mask |= hit
    return mask
