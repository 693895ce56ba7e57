import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from panofuse.errors import (DimensionMismatch, NegativeBoxSize, NonFiniteLogit,
                             ScoreOutOfRange, StuffDetection, UnknownClass, ValidationError)
from panofuse.types import (BoundingBox, Detection, LabelSpace, PanopticMap, SegmentInfo,
                            semantic_argmax, validate_inputs)

from _util import CAR, SKY, SKY_CAR, pmap

SKY_CAR_BUS = LabelSpace.from_kinds(["stuff", "thing", "thing"], ["sky", "car", "bus"])


def test_label_space_lookups():
    assert SKY_CAR_BUS.num_classes == 3
    assert SKY_CAR_BUS.thing_ids == [2, 3] and SKY_CAR_BUS.stuff_ids == [1]
    assert SKY_CAR_BUS.name(3) == "bus"
    assert 0 not in SKY_CAR_BUS and 4 not in SKY_CAR_BUS
    assert SKY_CAR_BUS.thing_mask().tolist() == [False, False, True, True]


def test_label_space_needs_contiguous_ids():
    from panofuse.types import ClassInfo, ClassKind
    with pytest.raises(ValidationError):
        LabelSpace((ClassInfo(1, "a", ClassKind.STUFF), ClassInfo(3, "b", ClassKind.THING)))


def test_validate_inputs_passes_consistent_bundle():
    logits = np.zeros((2, 4, 4), np.float32)
    dets = [Detection(CAR, BoundingBox(0, 0, 2, 2), 0.9)]
    out = validate_inputs(SKY_CAR, logits, dets)
    assert out[0] is SKY_CAR and out[2] == dets


@pytest.mark.parametrize("bad, err", [
    (lambda: validate_inputs(SKY_CAR, np.zeros((2, 4, 4)), [Detection(SKY, BoundingBox(0, 0, 1, 1), .9)]),
     StuffDetection),
    (lambda: validate_inputs(SKY_CAR, np.zeros((2, 4, 4)), [Detection(5, BoundingBox(0, 0, 1, 1), .9)]),
     UnknownClass),
    (lambda: validate_inputs(SKY_CAR_BUS, np.zeros((3, 4, 4)), [], np.zeros((2, 4, 5))),
     DimensionMismatch),
    (lambda: validate_inputs(SKY_CAR, np.zeros((3, 4, 4)), []), DimensionMismatch),
    (lambda: validate_inputs(SKY_CAR, np.full((2, 1, 1), np.nan), []), NonFiniteLogit),
])
def test_validate_inputs_rejects(bad, err):
    with pytest.raises(err):
        bad()


def test_semantic_argmax_examples():
    assert semantic_argmax(np.array([0.2, 0.9, 0.1]).reshape(3, 1, 1)).item() == 2
    assert semantic_argmax(np.array([0.5, 0.5]).reshape(2, 1, 1)).item() == 1
    assert (semantic_argmax(np.ones((4, 2, 2))) == 1).all()


logit_stacks = hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4)),
                          elements=st.floats(-100, 100, allow_nan=False))


@given(hnp.arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4)),
                  elements=st.integers(-800, 800)),
       st.integers(-400, 400))
def test_semantic_argmax_shift_invariant(raw, c):
    # multiples of 1/8 keep the shift exact, so ties survive it unchanged
    logits = raw / 8.0
    assert np.array_equal(semantic_argmax(logits), semantic_argmax(logits + c / 8.0))


@given(logit_stacks, st.randoms())
def test_semantic_argmax_permutation_covariant(logits, rnd):
    perm = list(range(logits.shape[0]))
    rnd.shuffle(perm)
    # channel perm[i] of the permuted stack is channel i of the original
    permuted = np.empty_like(logits)
    permuted[perm] = logits
    a = semantic_argmax(logits)
    b = semantic_argmax(permuted)
    unique_max = (logits == logits.max(0)).sum(0) == 1
    assert np.array_equal(np.asarray(perm)[a - 1][unique_max] + 1, b[unique_max])


def test_box_contains_uses_pixel_centers():
    b = BoundingBox(1.0, 2.0, 2.0, 1.0)
    assert b.contains(1, 2) and b.contains(2, 2)
    assert not b.contains(0, 2) and not b.contains(3, 2) and not b.contains(1, 3)
    assert BoundingBox(0.6, 0, 1, 1).contains(1, 0) and not BoundingBox(0.6, 0, 1, 1).contains(0, 0)


@given(st.floats(-20, 40), st.floats(-20, 40), st.floats(0.01, 40), st.floats(0.01, 40),
       st.integers(1, 24), st.integers(1, 24))
def test_pixel_ranges_match_contains(x, y, w, h, H, W):
    b = BoundingBox(x, y, w, h)
    y0, y1, x0, x1 = b.pixel_ranges(H, W)
    expected = np.array([[b.contains(c, r) for c in range(W)] for r in range(H)])
    got = np.zeros((H, W), bool)
    got[y0:y1, x0:x1] = True
    assert np.array_equal(expected, got)


@pytest.mark.parametrize("w, h", [(0, 1), (1, -1)])
def test_box_rejects_nonpositive_size(w, h):
    with pytest.raises(NegativeBoxSize):
        BoundingBox(0, 0, w, h)


@pytest.mark.parametrize("score", [-0.1, 1.01, float("nan")])
def test_detection_score_range(score):
    with pytest.raises(ScoreOutOfRange):
        Detection(CAR, BoundingBox(0, 0, 1, 1), score)


def test_panoptic_map_is_frozen_and_checked():
    m = pmap([[1, 1], [3, 0]], {1: SKY, 3: CAR})
    with pytest.raises(ValueError):
        m.ids[0, 0] = 3
    m.check()
    assert m.void_count() == 1
    assert m.class_map().tolist() == [[SKY, SKY], [CAR, 0]]
    with pytest.raises(ValidationError):
        PanopticMap(m.ids, (SegmentInfo(1, SKY, 3), SegmentInfo(3, CAR, 1))).check()
    with pytest.raises(ValidationError):
        PanopticMap(m.ids, (SegmentInfo(1, SKY, 2),)).check()


def test_equivalent_ignores_id_values():
    a = pmap([[1, 3], [4, 4]], {1: SKY, 3: CAR, 4: CAR})
    b = pmap([[1, 9], [5, 5]], {1: SKY, 9: CAR, 5: CAR})
    merged = pmap([[1, 9], [9, 9]], {1: SKY, 9: CAR})
    assert a.equivalent(b) and b.equivalent(a)
    assert not a.equivalent(merged) and not merged.equivalent(a)
