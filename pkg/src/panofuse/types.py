"""Shared data model: label space, boxes, detections and panoptic maps.

Logits and center fields are plain numpy arrays:

* logits: ``(C, H, W)`` float array, channel ``c - 1`` holds class ``c``.
* centers: ``(2, H, W)`` float array of per-pixel offsets (x then y) from the
  pixel center to the owning instance's box center.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from panofuse.errors import (
    DimensionMismatch,
    NegativeBoxSize,
    NonFiniteLogit,
    ScoreOutOfRange,
    StuffDetection,
    UnknownClass,
    ValidationError,
)

VOID_ID = 0


class ClassKind(str, enum.Enum):
    THING = "thing"
    STUFF = "stuff"


@dataclass(frozen=True)
class ClassInfo:
    class_id: int
    name: str
    kind: ClassKind


@dataclass(frozen=True)
class LabelSpace:
    """Ordered classes with ids ``1..N``; id 0 is reserved for void."""

    classes: Tuple[ClassInfo, ...]
    _kinds: Dict[int, ClassKind] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        ids = [c.class_id for c in classes]
        if ids != list(range(1, len(classes) + 1)):
            raise ValidationError(
                f"class ids must be contiguous from 1 in order, got {ids}"
            )
        object.__setattr__(self, "_kinds", {c.class_id: ClassKind(c.kind) for c in classes})

    @classmethod
    def from_kinds(cls, kinds: Sequence[str], names: Optional[Sequence[str]] = None) -> "LabelSpace":
        """Build from a list like ``["stuff", "thing", ...]`` (ids assigned 1..N)."""
        names = names or [f"class_{i + 1}" for i in range(len(kinds))]
        return cls(tuple(ClassInfo(i + 1, n, ClassKind(k)) for i, (k, n) in enumerate(zip(kinds, names))))

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __contains__(self, class_id) -> bool:
        return class_id in self._kinds

    def kind(self, class_id: int) -> ClassKind:
        try:
            return self._kinds[class_id]
        except KeyError:
            raise UnknownClass(f"class id {class_id} not in label space") from None

    def is_thing(self, class_id: int) -> bool:
        return self.kind(class_id) is ClassKind.THING

    def name(self, class_id: int) -> str:
        self.kind(class_id)
        return self.classes[class_id - 1].name

    @property
    def thing_ids(self) -> List[int]:
        return [c.class_id for c in self.classes if c.kind is ClassKind.THING]

    @property
    def stuff_ids(self) -> List[int]:
        return [c.class_id for c in self.classes if c.kind is ClassKind.STUFF]

    def thing_mask(self) -> np.ndarray:
        """Boolean lookup table indexed by class id (index 0 = void, False)."""
        lut = np.zeros(self.num_classes + 1, dtype=bool)
        lut[self.thing_ids] = True
        return lut


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel units, top-left corner plus size.

    Pixel ``(x, y)`` is inside when its center ``(x + 0.5, y + 0.5)`` lies in
    the half-open box ``[x_min, x_min + width) x [y_min, y_min + height)``.
    """

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "width", "height"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"box {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not (self.width > 0 and self.height > 0):
            raise NegativeBoxSize(f"box size must be positive, got {self.width}x{self.height}")

    def contains(self, x: int, y: int) -> bool:
        return (self.x_min <= x + 0.5 < self.x_min + self.width
                and self.y_min <= y + 0.5 < self.y_min + self.height)

    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.width / 2, self.y_min + self.height / 2)

    def area(self) -> float:
        return self.width * self.height

    def pixel_ranges(self, height: int, width: int) -> Tuple[int, int, int, int]:
        """Half-open ``(y0, y1, x0, x1)`` pixel ranges inside the box, clipped to the image.

        Evaluates the same predicate as :meth:`contains` so both agree bit for bit.
        """
        x0, x1 = _axis_range(self.x_min, self.width, width)
        y0, y1 = _axis_range(self.y_min, self.height, height)
        if x0 == x1 or y0 == y1:
            return (0, 0, 0, 0)
        return (y0, y1, x0, x1)

    def as_xywh(self) -> List[float]:
        return [self.x_min, self.y_min, self.width, self.height]


def _axis_range(lo: float, size: float, n: int) -> Tuple[int, int]:
    centers = np.arange(n, dtype=np.float64) + 0.5
    inside = np.flatnonzero((lo <= centers) & (centers < lo + size))
    if inside.size == 0:
        return (0, 0)
    return (int(inside[0]), int(inside[-1]) + 1)


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BoundingBox
    score: float

    def __post_init__(self):
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRange(f"score must be in [0, 1], got {score}")
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "class_id", int(self.class_id))


@dataclass(frozen=True)
class SegmentInfo:
    segment_id: int
    class_id: int
    area: int
    is_crowd: bool = False
    # index into the input detection list, only for predicted thing segments
    source_detection: Optional[int] = None


@dataclass(frozen=True, eq=False)
class PanopticMap:
    """Per-pixel segment ids (0 = void) plus metadata for every nonzero id."""

    ids: np.ndarray
    segments: Tuple[SegmentInfo, ...]

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.flags.writeable:
            ids = ids.copy()
        if ids.ndim != 2:
            raise DimensionMismatch(f"panoptic ids must be 2-D, got shape {ids.shape}")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "segments", tuple(sorted(self.segments, key=lambda s: s.segment_id)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return self.segments == other.segments and np.array_equal(self.ids, other.ids)

    __hash__ = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ids.shape

    def segment_dict(self) -> Dict[int, SegmentInfo]:
        return {s.segment_id: s for s in self.segments}

    def class_map(self) -> np.ndarray:
        """Per-pixel class id (0 for void)."""
        lut_ids = np.array([0] + [s.segment_id for s in self.segments], dtype=np.int64)
        lut_cls = np.array([0] + [s.class_id for s in self.segments], dtype=np.int64)
        order = np.argsort(lut_ids)
        pos = np.searchsorted(lut_ids[order], self.ids)
        return lut_cls[order][pos]

    def void_count(self) -> int:
        return int(np.count_nonzero(self.ids == VOID_ID))

    def check(self) -> None:
        """Raise ``ValidationError`` if ids, segments and areas disagree."""
        present, counts = np.unique(self.ids, return_counts=True)
        observed = {int(i): int(n) for i, n in zip(present, counts) if i != VOID_ID}
        declared = {}
        for s in self.segments:
            if s.segment_id <= 0 or s.segment_id in declared:
                raise ValidationError(f"bad or duplicate segment id {s.segment_id}")
            declared[s.segment_id] = s.area
        if set(observed) != set(declared):
            raise ValidationError(
                f"segment ids differ: pixels {sorted(observed)} vs segments {sorted(declared)}"
            )
        for sid, area in observed.items():
            if declared[sid] != area:
                raise ValidationError(f"segment {sid}: area {declared[sid]} != pixel count {area}")

    def equivalent(self, other: "PanopticMap") -> bool:
        """Same class per pixel and same pixel grouping, ignoring segment id values."""
        if self.shape != other.shape:
            return False
        if not np.array_equal(self.class_map(), other.class_map()):
            return False
        a, b = self.ids.ravel(), other.ids.ravel()
        pairs = np.unique(a * (int(b.max(initial=0)) + 1) + b)
        # ids correspond one-to-one iff each side has as many distinct ids as there are pairs
        return len(np.unique(a)) == len(pairs) == len(np.unique(b))

    def relabeled(self, ids: np.ndarray, segments: Iterable[SegmentInfo]) -> "PanopticMap":
        return PanopticMap(ids, tuple(segments))


def build_segments(ids: np.ndarray, meta: Dict[int, SegmentInfo]) -> Tuple[SegmentInfo, ...]:
    """Rebuild the segment list from pixel counts, dropping ids with no pixels."""
    present, counts = np.unique(ids, return_counts=True)
    out = []
    for sid, n in zip(present.tolist(), counts.tolist()):
        if sid == VOID_ID:
            continue
        s = meta[sid]
        out.append(SegmentInfo(sid, s.class_id, n, s.is_crowd, s.source_detection))
    return tuple(out)


def validate_inputs(
    labels: LabelSpace,
    logits: np.ndarray,
    dets: Sequence[Detection],
    centers: Optional[np.ndarray] = None,
):
    """Check shapes and invariants; returns ``(labels, logits, dets, centers)`` unchanged."""
    logits = np.asarray(logits)
    if logits.ndim != 3:
        raise DimensionMismatch(f"logits must be C x H x W, got shape {logits.shape}")
    if logits.shape[0] != labels.num_classes:
        raise DimensionMismatch(
            f"logits have {logits.shape[0]} channels, label space has {labels.num_classes} classes"
        )
    if not np.issubdtype(logits.dtype, np.floating):
        raise ValidationError(f"logits must be floating point, got {logits.dtype}")
    if not np.isfinite(logits).all():
        raise NonFiniteLogit("logits contain NaN or infinite values")
    if centers is not None:
        centers = np.asarray(centers)
        if centers.ndim != 3 or centers.shape[0] != 2 or centers.shape[1:] != logits.shape[1:]:
            raise DimensionMismatch(
                f"centers shape {centers.shape} incompatible with logits {logits.shape}"
            )
        if not np.isfinite(centers).all():
            raise ValidationError("center offsets contain NaN or infinite values")
    for i, d in enumerate(dets):
        if d.class_id not in labels:
            raise UnknownClass(f"detection {i}: class id {d.class_id} not in label space")
        if not labels.is_thing(d.class_id):
            raise StuffDetection(f"detection {i}: class {labels.name(d.class_id)!r} is a stuff class")
    return labels, logits, dets, centers


def semantic_argmax(logits: np.ndarray) -> np.ndarray:
    """Per-pixel class id of the largest logit; ties go to the lowest class id."""
    return np.argmax(logits, axis=0).astype(np.int64) + 1
