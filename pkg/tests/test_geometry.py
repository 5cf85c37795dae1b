import pytest
from hypothesis import given
from hypothesis import strategies as st

from tablekit.errors import SchemaError
from tablekit.geometry import BBox, hull, iou, merge_intervals, validate_bbox


def box(x0, y0, x1, y1):
    return BBox(x0, y0, x1, y1)


def test_iou_identical():
    assert iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0


def test_iou_disjoint():
    assert iou(box(0, 0, 10, 10), box(20, 0, 30, 10)) == 0.0


def test_iou_half_shift():
    # (0,0,10,10) vs (5,0,15,10): intersection 50, union 150
    assert iou(box(0, 0, 10, 10), box(5, 0, 15, 10)) == pytest.approx(1 / 3)


boxes = st.builds(
    lambda x, y, w, h: BBox(x, y, x + w, y + h),
    st.floats(0, 500),
    st.floats(0, 500),
    st.floats(0.1, 200),
    st.floats(0.1, 200),
)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0 + 1e-12


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0)


def test_validate_bbox_rejects_inverted():
    with pytest.raises(SchemaError, match="x0 < x1 violated"):
        validate_bbox(box(50, 10, 10, 20), "token t1")
    with pytest.raises(SchemaError, match="y0 < y1 violated"):
        validate_bbox(box(10, 20, 50, 20), "token t1")


def test_validate_bbox_rejects_negative_and_nan():
    with pytest.raises(SchemaError):
        validate_bbox(box(-1, 0, 5, 5))
    with pytest.raises(SchemaError):
        validate_bbox(box(0, 0, float("nan"), 5))


def test_hull():
    assert hull([box(0, 0, 5, 5), box(10, 2, 12, 20)]) == box(0, 0, 12, 20)
    assert hull([]) is None


def test_merge_intervals():
    assert merge_intervals([(0, 5), (3, 8), (10, 12)]) == [(0, 8), (10, 12)]
    assert merge_intervals([]) == []
