"""Same-class overlap resolution.

When several boxes of the same class cover a pixel that the head assigns to
that class, one detection has to own it. Three rules are available:

* highest confidence: the detection with the largest score,
* smallest first: the detection with the smallest box area,
* closest center: the detection whose box center is nearest to the pixel
  position shifted by its predicted center offset.

All ties go to the lower detection index.
"""
from __future__ import annotations

import enum
from typing import List, Sequence

import numpy as np

from panofuse.types import Detection


class Policy(str, enum.Enum):
    HIGHEST_CONFIDENCE = "hc"
    SMALLEST_FIRST = "sf"
    CLOSEST_CENTER = "cc"


def order_highest_confidence(dets: Sequence[Detection]) -> List[int]:
    """Detection indices by decreasing score (stable)."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def order_smallest_first(dets: Sequence[Detection]) -> List[int]:
    """Detection indices by increasing box area (stable)."""
    return sorted(range(len(dets)), key=lambda i: (dets[i].box.area(), i))


def priority_order(dets: Sequence[Detection], policy: Policy) -> List[int]:
    if policy is Policy.HIGHEST_CONFIDENCE:
        return order_highest_confidence(dets)
    if policy is Policy.SMALLEST_FIRST:
        return order_smallest_first(dets)
    raise ValueError(f"policy {policy} has no priority order")


def assign_by_order(pixel, candidates: Sequence[int], order: Sequence[int]) -> int:
    # pixel is unused; kept so every policy shares one call shape
    rank = {det: pos for pos, det in enumerate(order)}
    return min(candidates, key=lambda i: (rank[i], i))


def squared_distance(px: float, py: float, box_center) -> float:
    dx = px - box_center[0]
    dy = py - box_center[1]
    return dx * dx + dy * dy


def predicted_center(pixel, centers: np.ndarray):
    x, y = pixel
    return (x + 0.5 + float(centers[0, y, x]), y + 0.5 + float(centers[1, y, x]))


def assign_closest_center(pixel, candidates: Sequence[int], dets: Sequence[Detection],
                          centers: np.ndarray) -> int:
    """Candidate whose box center is nearest to the pixel's predicted center."""
    qx, qy = predicted_center(pixel, centers)
    best, best_d = None, None
    for i in sorted(candidates):
        d = squared_distance(qx, qy, dets[i].box.center())
        if best is None or d < best_d:
            best, best_d = i, d
    return best
