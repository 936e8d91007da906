import math

import pytest
from hypothesis import given, strategies as st

from oracles import box_iou_pixel_count
from segreward.errors import InvalidGeometry
from segreward.geometry import (
    NORMALIZED_SPACE,
    Box,
    CoordSpace,
    Point2,
    box_iou,
    box_l1,
    normalize_box,
    point_distance,
    point_in_box,
    rescale_box,
    rescale_point,
)

S840 = CoordSpace(840, 840)


class TestRescale:
    def test_origin_fixed_point(self):
        assert rescale_point(Point2(0, 0), S840, NORMALIZED_SPACE) == Point2(0, 0)

    def test_corner_maps_to_corner(self):
        assert rescale_point(Point2(840, 840), S840, NORMALIZED_SPACE) == Point2(1000, 1000)

    def test_midpoints(self):
        # 420 * 1000 / 840 = 500, 210 * 1000 / 840 = 250
        assert rescale_point(Point2(420, 210), S840, NORMALIZED_SPACE) == Point2(500, 250)

    def test_full_frame_box(self):
        assert rescale_box(Box(0, 0, 840, 840), S840, NORMALIZED_SPACE) == Box(0, 0, 1000, 1000)

    def test_box_hand_arithmetic(self):
        assert rescale_box(Box(84, 84, 168, 168), S840, NORMALIZED_SPACE) == Box(100, 100, 200, 200)

    def test_identity_space(self):
        b = Box(3, 7, 11, 13)
        assert rescale_box(b, S840, S840) == b

    @given(
        st.floats(0, 840), st.floats(0, 840),
        st.integers(1, 2000), st.integers(1, 2000),
    )
    def test_round_trip_is_identity(self, x, y, w, h):
        src = CoordSpace(w, h)
        p = Point2(x, y)
        back = rescale_point(rescale_point(p, src, NORMALIZED_SPACE), NORMALIZED_SPACE, src)
        assert math.isclose(back.x, p.x, abs_tol=1e-9)
        assert math.isclose(back.y, p.y, abs_tol=1e-9)


class TestNormalizeBox:
    def test_corner_swap(self):
        assert normalize_box(Box(10, 10, 5, 5)) == Box(5, 5, 10, 10)

    def test_already_normalized(self):
        assert normalize_box(Box(0, 0, 1, 1)) == Box(0, 0, 1, 1)

    def test_degenerate_zero_width_preserved(self):
        assert normalize_box(Box(3, 9, 3, 2)) == Box(3, 2, 3, 9)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidGeometry):
            normalize_box(Box(0, 0, math.nan, 1))
        with pytest.raises(InvalidGeometry):
            normalize_box(Box(0, 0, math.inf, 1))


class TestBoxIou:
    def test_identity(self):
        b = Box(5, 5, 50, 60)
        assert box_iou(b, b) == 1.0

    def test_disjoint(self):
        assert box_iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_hand_value_third(self):
        # inter 50x100 = 5000, union 2*10000 - 5000 = 15000
        assert math.isclose(box_iou(Box(0, 0, 100, 100), Box(50, 0, 150, 100)), 1 / 3, rel_tol=1e-12)

    def test_matches_pixel_brute_force(self):
        a = (0, 0, 100, 100)
        b = (50, 0, 150, 100)
        oracle = box_iou_pixel_count(a, b, 160, 110)
        assert math.isclose(box_iou(Box(*a), Box(*b)), oracle, abs_tol=1e-9)

    def test_degenerate_union_zero(self):
        z = Box(5, 5, 5, 5)
        assert box_iou(z, z) == 0.0

    @given(st.tuples(*[st.integers(0, 30) for _ in range(8)]))
    def test_symmetric_bounded_and_matches_pixel_oracle(self, coords):
        a = normalize_box(Box(*coords[:4]))
        b = normalize_box(Box(*coords[4:]))
        v = box_iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == box_iou(b, a)
        assert math.isclose(v, box_iou_pixel_count(a.as_tuple(), b.as_tuple(), 32, 32), abs_tol=1e-9)
        # IoU hits 1 only for identical boxes of positive area
        if v == 1.0:
            assert a == b
            assert (a.x2 - a.x1) * (a.y2 - a.y1) > 0


class TestBoxL1:
    def test_identical(self):
        assert box_l1(Box(1, 2, 3, 4), Box(1, 2, 3, 4)) == 0.0

    def test_unit_shift(self):
        assert box_l1(Box(0, 0, 10, 10), Box(1, 1, 11, 11)) == 4.0

    def test_single_coordinate(self):
        assert box_l1(Box(0, 0, 0, 0), Box(0, 0, 0, 5)) == 5.0

    @given(st.tuples(*[st.floats(-100, 100) for _ in range(12)]))
    def test_metric_axioms(self, coords):
        a, b, c = Box(*coords[:4]), Box(*coords[4:8]), Box(*coords[8:])
        assert box_l1(a, b) == box_l1(b, a)
        assert box_l1(a, a) == 0.0
        assert box_l1(a, c) <= box_l1(a, b) + box_l1(b, c) + 1e-9


class TestPoints:
    def test_corner_is_inside(self):
        assert point_in_box(Point2(0, 0), Box(0, 0, 10, 10))

    def test_center_is_inside(self):
        assert point_in_box(Point2(5, 5), Box(0, 0, 10, 10))

    def test_just_outside(self):
        assert not point_in_box(Point2(11, 5), Box(0, 0, 10, 10))

    def test_distance_zero(self):
        assert point_distance(Point2(3, 4), Point2(3, 4)) == 0.0

    def test_triangle_345(self):
        assert point_distance(Point2(0, 0), Point2(3, 4)) == 5.0

    def test_threshold_boundary_119(self):
        # exactly 119 apart fails the strict < 119 keypoint test
        d = point_distance(Point2(0, 0), Point2(119, 0))
        assert d == 119.0
        assert not d < 119.0


def test_coord_space_validation():
    with pytest.raises(InvalidGeometry):
        CoordSpace(0, 10)
    assert NORMALIZED_SPACE.width == 1000 and NORMALIZED_SPACE.height == 1000
