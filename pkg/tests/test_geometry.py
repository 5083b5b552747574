import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_boxes
from oracles import iou_by_area, nms_by_definition
from ota_assign.geometry import (
    Box,
    BoxList,
    UnitsMismatch,
    cxcywh_to_xyxy,
    giou,
    iou,
    l1_box_distance,
    nms,
    pairwise_giou,
    pairwise_iou,
    pairwise_l1,
    xyxy_to_cxcywh,
)

coord = st.floats(-100, 100, allow_nan=False)
side = st.floats(0, 50, allow_nan=False)


@st.composite
def boxes(draw, min_side=0.0):
    x, y = draw(coord), draw(coord)
    w = draw(st.floats(min_side, 50))
    h = draw(st.floats(min_side, 50))
    return (x, y, x + w, y + h)


def test_iou_examples():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0
    assert iou((0, 0, 2, 2), (1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-12)


def test_giou_examples():
    assert giou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert giou((0, 0, 1, 1), (1, 0, 2, 1)) == pytest.approx(0.0, abs=1e-12)
    # union 2, hull 100
    far = giou((0, 0, 1, 1), (9, 9, 10, 10))
    assert far == pytest.approx(0.0 - (100 - 2) / 100)
    assert far < 0


def test_l1_examples():
    assert l1_box_distance((0, 0, 2, 2), (0, 0, 2, 2)) == 0.0
    assert l1_box_distance((0, 0, 2, 2), (0, 0, 4, 2)) == pytest.approx(3.0)
    with pytest.raises(UnitsMismatch):
        l1_box_distance((0, 0, 1, 1), (0, 0, 1, 1), "normalized", "absolute")


def test_zero_area_boxes_are_finite():
    pt = (1.0, 1.0, 1.0, 1.0)
    assert iou(pt, pt) == 0.0
    assert iou(pt, (0, 0, 2, 2)) == 0.0
    assert np.isfinite(giou(pt, pt))
    assert np.isfinite(pairwise_giou(np.array([pt]), np.array([pt]))).all()


def test_box_validation_and_conversion():
    with pytest.raises(ValueError):
        Box(1, 0, 0, 1)
    b = Box.from_cxcywh(1.0, 2.0, 4.0, 2.0)
    assert b.as_tuple() == (-1.0, 1.0, 3.0, 3.0)
    assert b.to_cxcywh() == (1.0, 2.0, 4.0, 2.0)
    with pytest.raises(ValueError):
        BoxList([[0, 0, 1, 1]], units="pixels")
    with pytest.raises(ValueError):
        BoxList([[2, 0, 1, 1]])


def test_boxlist_json_roundtrip():
    bl = BoxList([[0, 0, 10, 20], [5, 5, 6, 6]], "absolute")
    again = BoxList.from_json(bl.to_json())
    assert again == bl
    assert len(again) == 2
    assert again[1] == Box(5, 5, 6, 6)
    norm = bl.normalized((10, 20))
    assert norm.units == "normalized"
    np.testing.assert_allclose(norm.xyxy[0], [0, 0, 1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord, side, side), min_size=1, max_size=8))
def test_cxcywh_roundtrip(rows):
    arr = np.array(rows)
    back = xyxy_to_cxcywh(cxcywh_to_xyxy(arr))
    np.testing.assert_allclose(back, arr, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(boxes(), boxes())
def test_overlap_invariants(a, b):
    i, g = iou(a, b), giou(a, b)
    assert 0.0 <= i <= 1.0
    assert -1.0 - 1e-12 <= g <= i + 1e-12
    assert i == pytest.approx(iou(b, a), abs=1e-12)
    assert g == pytest.approx(giou(b, a), abs=1e-12)
    assert i == pytest.approx(iou_by_area(a, b), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(boxes(min_side=0.01))
def test_self_overlap_is_one(a):
    assert iou(a, a) == 1.0
    assert giou(a, a) == 1.0


@settings(max_examples=200, deadline=None)
@given(boxes(min_side=0.01), boxes(min_side=0.01), st.floats(-10, 10), st.floats(-10, 10))
def test_translation_invariance(a, b, dx, dy):
    shift = lambda r: (r[0] + dx, r[1] + dy, r[2] + dx, r[3] + dy)  # noqa: E731
    assert iou(shift(a), shift(b)) == pytest.approx(iou(a, b), abs=1e-9)
    assert giou(shift(a), shift(b)) == pytest.approx(giou(a, b), abs=1e-9)


def test_pairwise_matches_scalar(rng):
    a = random_boxes(rng, 7)
    b = random_boxes(rng, 9)
    pi = pairwise_iou(a, b)
    pg = pairwise_giou(a, b)
    pl = pairwise_l1(a, b)
    for i in range(7):
        for j in range(9):
            assert pi[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)
            assert pg[i, j] == pytest.approx(giou(a[i], b[j]), abs=1e-12)
            assert pl[i, j] == pytest.approx(l1_box_distance(a[i], b[j]), abs=1e-12)


def test_nms_examples():
    assert nms(BoxList([[0, 0, 1, 1]]), [0.5], 0.7).tolist() == [0]
    same = BoxList([[0, 0, 2, 2], [0, 0, 2, 2]])
    assert nms(same, [0.9, 0.8], 0.7).tolist() == [0]
    assert nms(same, [0.8, 0.9], 0.7).tolist() == [1]
    three = [[0, 0, 10, 10], [0, 0, 10, 8], [9, 0, 19, 10]]
    assert iou(three[0], three[1]) == pytest.approx(0.8)
    assert iou(three[0], three[2]) < 0.7 and iou(three[1], three[2]) < 0.7
    expected = nms_by_definition(three, [0.9, 0.8, 0.7], 0.7)
    assert expected == [0, 2]
    assert nms(BoxList(three), [0.9, 0.8, 0.7], 0.7).tolist() == expected


def test_nms_errors():
    with pytest.raises(ValueError):
        nms(BoxList([[0, 0, 1, 1]]), [0.5, 0.4], 0.7)
    with pytest.raises(ValueError):
        nms(BoxList([[0, 0, 1, 1]]), [0.5], 0.0)


@pytest.mark.parametrize("threshold", [0.3, 0.5, 0.7, 1.0])
def test_nms_matches_definition(rng, threshold):
    for _ in range(50):
        n = int(rng.integers(1, 25))
        bx = random_boxes(rng, n)
        sc = rng.uniform(size=n)
        got = nms(bx, sc, threshold).tolist()
        assert got == nms_by_definition(bx.tolist(), sc.tolist(), threshold)
