"""Inference-time clean-up of a fused panoptic map.

Two optional steps, applied in this order:

1. unknown mode: pixels the semantic argmax calls a thing but the fused map
   gave to a stuff class (no detection covered them) become void;
2. small-stuff removal: stuff segments with fewer pixels than a threshold
   become void. The threshold is in absolute pixels and is not rescaled with
   image resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from panofuse.errors import DimensionMismatch
from panofuse.types import VOID_ID, LabelSpace, PanopticMap, build_segments


@dataclass
class PostprocessReport:
    pixels_voided_unknown: int = 0
    stuff_segments_removed: List[Tuple[int, int]] = field(default_factory=list)

    def __add__(self, other: "PostprocessReport") -> "PostprocessReport":
        return PostprocessReport(
            self.pixels_voided_unknown + other.pixels_voided_unknown,
            self.stuff_segments_removed + other.stuff_segments_removed,
        )


def _void_where(pmap: PanopticMap, mask: np.ndarray) -> PanopticMap:
    ids = pmap.ids.copy()
    ids[mask] = VOID_ID
    return PanopticMap(ids, build_segments(ids, pmap.segment_dict()))


def apply_unknown_mode(pmap: PanopticMap, sem_argmax: np.ndarray, labels: LabelSpace):
    """Void stuff-assigned pixels whose semantic argmax is a thing class."""
    sem_argmax = np.asarray(sem_argmax)
    if sem_argmax.shape != pmap.shape:
        raise DimensionMismatch(f"semantic map {sem_argmax.shape} vs panoptic map {pmap.shape}")
    is_thing = labels.thing_mask()
    cls = pmap.class_map()
    mask = (cls != VOID_ID) & ~is_thing[cls] & is_thing[sem_argmax]
    n = int(np.count_nonzero(mask))
    if n == 0:
        return pmap, PostprocessReport()
    return _void_where(pmap, mask), PostprocessReport(pixels_voided_unknown=n)


def remove_small_stuff(pmap: PanopticMap, threshold: int, labels: LabelSpace):
    """Void every stuff segment with ``area < threshold``; thing segments are untouched."""
    small = [s for s in pmap.segments
             if not labels.is_thing(s.class_id) and s.area < threshold]
    if not small:
        return pmap, PostprocessReport()
    mask = np.isin(pmap.ids, [s.segment_id for s in small])
    report = PostprocessReport(stuff_segments_removed=[(s.class_id, s.area) for s in small])
    return _void_where(pmap, mask), report
