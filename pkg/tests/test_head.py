import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panofuse.errors import DimensionMismatch, MissingCenters, NoStuffClasses, ValidationError
from panofuse.head import FusionConfig, filter_detections, fuse, fuse_bruteforce, instance_logits
from panofuse.policies import Policy
from panofuse.types import BoundingBox, Detection, LabelSpace, semantic_argmax

from _util import CAR, LABELS, SKY, SKY_CAR, overlap_mask, random_inputs

POLICIES = list(Policy)


def car(box, score=0.9):
    return Detection(CAR, BoundingBox(*box), score)


def two_by_two_logits():
    sky = np.array([[0.0, 1.0], [1.0, 1.0]])
    car_ch = np.array([[2.0, -1.0], [-1.0, -1.0]])
    return np.stack([sky, car_ch])


def test_single_car_pixel():
    m = fuse(SKY_CAR, two_by_two_logits(), [car((0, 0, 1, 1))])
    assert m.class_map().tolist() == [[CAR, SKY], [SKY, SKY]]
    thing = [s for s in m.segments if s.class_id == CAR]
    assert len(thing) == 1 and thing[0].area == 1 and thing[0].source_detection == 0


def test_undetected_thing_region_goes_to_stuff():
    m = fuse(SKY_CAR, two_by_two_logits(), [])
    assert (m.class_map() == SKY).all()


def test_detection_without_winning_pixels_emits_no_segment():
    m = fuse(SKY_CAR, two_by_two_logits(), [car((1, 0, 1, 2))])
    assert (m.class_map() == SKY).all()
    assert [s.segment_id for s in m.segments] == [SKY]


# Three overlapping cars on a 6x10 image (car logit 1 on rows 1-4, cols 1-8; sky 0).
THREE_CARS = [car((1, 1, 4, 4), 0.6), car((3, 2, 3, 3), 0.5), car((5, 1, 4, 4), 0.7)]
_ROWS = ["1111111111", "1{a}1", "1{b}1", "1{b}1", "1{c}1", "1111111111"]


def _grid(a, b, c):
    return np.array([[int(ch) for ch in r.format(a=a, b=b, c=c)] for r in _ROWS])


EXPECTED_THREE_CARS = {
    # HC order is C, A, B: the lowest-scored middle box gets nothing
    Policy.HIGHEST_CONFIDENCE: _grid("33335555", "33335555", "33335555"),
    Policy.SMALLEST_FIRST: _grid("33335555", "33444555", "33444555"),
    # zero offsets: nearest box center to each pixel center
    Policy.CLOSEST_CENTER: _grid("33335555", "33344555", "33444555"),
}


@pytest.mark.parametrize("policy", POLICIES)
def test_three_cars_partition(policy):
    logits = np.zeros((2, 6, 10))
    logits[CAR - 1, 1:5, 1:9] = 1.0
    centers = np.zeros((2, 6, 10))
    cfg = FusionConfig(policy=policy)
    m = fuse(SKY_CAR, logits, THREE_CARS, centers, cfg)
    assert np.array_equal(m.ids, EXPECTED_THREE_CARS[policy])
    assert np.array_equal(m.ids, fuse_bruteforce(SKY_CAR, logits, THREE_CARS, centers, cfg).ids)
    # the union of the car segments is exactly where the car channel wins
    assert np.array_equal(m.class_map() == CAR, logits[CAR - 1] > logits[SKY - 1])


def test_ids_follow_input_order_not_kept_order():
    logits = np.zeros((2, 6, 10))
    logits[CAR - 1, 1:5, 1:9] = 1.0
    dets = [car((0, 0, 1, 1), 0.1)] + THREE_CARS  # the first one is filtered out
    m = fuse(SKY_CAR, logits, dets)
    sources = {s.segment_id: s.source_detection for s in m.segments if s.class_id == CAR}
    assert sources == {4: 1, 6: 3}


def test_filter_detections_boundary():
    dets = [car((0, 0, 1, 1), s) for s in (0.39, 0.40, 0.95)]
    assert [d.score for d in filter_detections(dets, 0.4)] == [0.40, 0.95]
    assert filter_detections([], 0.4) == []
    assert filter_detections(dets, 0.0) == dets


def test_config_and_shape_errors():
    with pytest.raises(ValidationError):
        FusionConfig(score_threshold=1.5)
    with pytest.raises(ValidationError):
        FusionConfig(stuff_area_threshold=-1)
    with pytest.raises(ValueError):
        FusionConfig(policy="nearest")
    with pytest.raises(MissingCenters):
        fuse(SKY_CAR, np.zeros((2, 2, 2)), [], cfg=FusionConfig(policy="cc"))
    with pytest.raises(DimensionMismatch):
        fuse(SKY_CAR, np.zeros((3, 2, 2)), [])
    with pytest.raises(NoStuffClasses):
        fuse(LabelSpace.from_kinds(["thing"]), np.zeros((1, 2, 2)), [])


def test_instance_logits_layout():
    logits = np.arange(2 * 2 * 3, dtype=np.float64).reshape(2, 2, 3)
    y = instance_logits(SKY_CAR, logits, [car((1, 0, 2, 1))])
    assert y.shape == (2, 2, 3)
    assert np.array_equal(y[0], logits[0])
    assert y[1].tolist() == [[-np.inf, 7.0, 8.0], [-np.inf, -np.inf, -np.inf]]


@pytest.mark.parametrize("seed", range(24))
def test_matches_bruteforce(seed):
    _, logits, dets, centers = random_inputs(seed)
    for policy in POLICIES:
        for pp in (FusionConfig(policy=policy),
                   FusionConfig(policy=policy, unknown_mode=True, stuff_area_threshold=40)):
            assert np.array_equal(fuse(LABELS, logits, dets, centers, pp).ids,
                                  fuse_bruteforce(LABELS, logits, dets, centers, pp).ids)


def test_zero_detections_is_stuff_argmax():
    _, logits, _, _ = random_inputs(5)
    stuff = np.asarray(LABELS.stuff_ids)
    expected = stuff[np.argmax(logits[stuff - 1], axis=0)]
    assert np.array_equal(fuse(LABELS, logits, []).ids, expected)


def test_float32_and_float64_logits_agree():
    _, logits, dets, centers = random_inputs(7)
    cfg = FusionConfig(policy="cc")
    a = fuse(LABELS, logits, dets, centers, cfg)
    b = fuse(LABELS, logits.astype(np.float64), dets, centers.astype(np.float64), cfg)
    assert np.array_equal(a.ids, b.ids)


# ---------------------------------------------------------------- properties

seeds = st.integers(0, 10_000)
policies = st.sampled_from(POLICIES)


@settings(max_examples=40, deadline=None)
@given(seeds, policies)
def test_output_is_a_partition(seed, policy):
    _, logits, dets, centers = random_inputs(seed)
    m = fuse(LABELS, logits, dets, centers, FusionConfig(policy=policy))
    m.check()
    assert m.void_count() == 0
    h, w = m.shape
    for s in m.segments:
        if s.source_detection is None:
            assert not LABELS.is_thing(s.class_id)
            continue
        d = dets[s.source_detection]
        assert d.class_id == s.class_id and d.score >= 0.4
        y0, y1, x0, x1 = d.box.pixel_ranges(h, w)
        inside = np.zeros((h, w), bool)
        inside[y0:y1, x0:x1] = True
        assert not np.any((m.ids == s.segment_id) & ~inside)


@settings(max_examples=40, deadline=None)
@given(seeds, policies)
def test_pixels_outside_boxes_take_best_stuff(seed, policy):
    _, logits, dets, centers = random_inputs(seed)
    cfg = FusionConfig(policy=policy)
    m = fuse(LABELS, logits, dets, centers, cfg)
    free = np.ones(m.shape, bool)
    for d in filter_detections(dets, cfg.score_threshold):
        y0, y1, x0, x1 = d.box.pixel_ranges(*m.shape)
        free[y0:y1, x0:x1] = False
    stuff = np.asarray(LABELS.stuff_ids)
    best = stuff[np.argmax(logits[stuff - 1], axis=0)]
    assert np.array_equal(m.ids[free], best[free])


@settings(max_examples=30, deadline=None)
@given(seeds, policies, st.integers(-64, 64))
def test_constant_shift_invariance(seed, policy, c):
    _, logits, dets, centers = random_inputs(seed)
    # dyadic values keep the shift exact
    logits = np.round(logits.astype(np.float64) * 8) / 8
    cfg = FusionConfig(policy=policy)
    assert np.array_equal(fuse(LABELS, logits, dets, centers, cfg).ids,
                          fuse(LABELS, logits + c, dets, centers, cfg).ids)


@settings(max_examples=30, deadline=None)
@given(seeds.filter(lambda s: s % 4), st.sampled_from([Policy.HIGHEST_CONFIDENCE, Policy.CLOSEST_CENTER]),
       st.randoms())
def test_detection_order_permutation(seed, policy, rnd):
    # noisy scenes: no exact ties between channels, scores or center distances
    _, logits, dets, centers = random_inputs(seed)
    perm = list(range(len(dets)))
    rnd.shuffle(perm)
    cfg = FusionConfig(policy=policy)
    a = fuse(LABELS, logits, dets, centers, cfg)
    b = fuse(LABELS, logits, [dets[i] for i in perm], centers, cfg)
    assert a.equivalent(b)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_highest_confidence_depends_on_score_order_only(seed):
    _, logits, dets, _ = random_inputs(seed)
    squashed = [Detection(d.class_id, d.box, d.score ** 3) for d in dets]
    cfg = FusionConfig(score_threshold=0.0)
    assert np.array_equal(fuse(LABELS, logits, dets, cfg=cfg).ids,
                          fuse(LABELS, logits, squashed, cfg=cfg).ids)


@settings(max_examples=30, deadline=None)
@given(seeds, st.randoms())
def test_smallest_first_ignores_scores(seed, rnd):
    _, logits, dets, _ = random_inputs(seed)
    rescored = [Detection(d.class_id, d.box, rnd.uniform(0.5, 1.0)) for d in dets]
    cfg = FusionConfig(policy="sf", score_threshold=0.0)
    assert np.array_equal(fuse(LABELS, logits, dets, cfg=cfg).ids,
                          fuse(LABELS, logits, rescored, cfg=cfg).ids)


@settings(max_examples=30, deadline=None)
@given(seeds, policies, st.floats(0, 1), st.floats(0, 1))
def test_thing_pixels_shrink_as_threshold_rises(seed, policy, t1, t2):
    lo, hi = sorted((t1, t2))
    _, logits, dets, centers = random_inputs(seed)
    thing = LABELS.thing_mask()
    a = fuse(LABELS, logits, dets, centers, FusionConfig(score_threshold=lo, policy=policy))
    b = fuse(LABELS, logits, dets, centers, FusionConfig(score_threshold=hi, policy=policy))
    assert not np.any(thing[b.class_map()] & ~thing[a.class_map()])


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_policies_differ_only_on_same_class_overlaps(seed):
    _, logits, dets, centers = random_inputs(seed)
    outs = [fuse(LABELS, logits, dets, centers, FusionConfig(policy=p)).ids for p in POLICIES]
    allowed = overlap_mask(filter_detections(dets, 0.4), logits.shape[1:])
    for o in outs[1:]:
        assert not np.any((o != outs[0]) & ~allowed)


@settings(max_examples=20, deadline=None)
@given(seeds, policies)
def test_semantic_argmax_agrees_where_no_boxes_overlap(seed, policy):
    _, logits, dets, centers = random_inputs(seed)
    m = fuse(LABELS, logits, dets, centers, FusionConfig(policy=policy))
    sem = semantic_argmax(logits)
    # where the argmax is stuff, no box can win the pixel for a thing
    stuff_win = ~LABELS.thing_mask()[sem]
    assert np.array_equal(m.class_map()[stuff_win], sem[stuff_win])
