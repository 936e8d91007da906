import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import mask_counts_loop, mask_iou_loop, rasterize_pointwise, rle_encode_walk
from segreward.errors import CorruptRle, InvalidGeometry, ShapeError
from segreward.geometry import CoordSpace, Point2
from segreward.mask import (
    BinaryMask,
    Polygon,
    RleMask,
    distance_to_foreground,
    mask_iou,
    mask_union,
    rasterize,
    rle_decode,
    rle_encode,
)


def mask_of(rows):
    return BinaryMask(np.array(rows, dtype=bool))


random_mask = st.integers(1, 64).flatmap(
    lambda w: st.integers(1, 64).flatmap(
        lambda h: st.lists(st.booleans(), min_size=w * h, max_size=w * h).map(
            lambda bits: BinaryMask(np.array(bits, dtype=bool).reshape(h, w))
        )
    )
)


class TestRasterize:
    def test_square_area(self):
        poly = Polygon((0, 0, 10, 0, 10, 10, 0, 10))
        m = rasterize([poly], CoordSpace(10, 10))
        assert m.area == 100
        oracle = rasterize_pointwise([poly.vertices], 10, 10)
        assert np.array_equal(m.array, oracle)

    def test_sliver_below_pixel_centers(self):
        # triangle entirely between y=0 and y=0.4: no pixel center row is crossed
        poly = Polygon((0, 0, 10, 0, 5, 0.4))
        assert rasterize([poly], CoordSpace(10, 10)).area == 0

    def test_disjoint_union_adds(self):
        a = Polygon((0, 0, 1, 0, 1, 1, 0, 1))
        b = Polygon((3, 3, 4, 3, 4, 4, 3, 4))
        m = rasterize([a, b], CoordSpace(6, 6))
        assert m.area == rasterize([a], CoordSpace(6, 6)).area + rasterize([b], CoordSpace(6, 6)).area == 2
        oracle = rasterize_pointwise([a.vertices, b.vertices], 6, 6)
        assert np.array_equal(m.array, oracle)

    def test_concave_polygon_matches_pointwise_oracle(self):
        # an L-shape exercises rows with 4 crossings
        poly = Polygon((0, 0, 8, 0, 8, 3, 3, 3, 3, 8, 0, 8))
        m = rasterize([poly], CoordSpace(10, 10))
        oracle = rasterize_pointwise([poly.vertices], 10, 10)
        assert np.array_equal(m.array, oracle)

    def test_too_few_vertices(self):
        with pytest.raises(InvalidGeometry):
            Polygon((0, 0, 1, 1))

    def test_empty_polygon_list(self):
        with pytest.raises(InvalidGeometry):
            rasterize([], CoordSpace(4, 4))

    @given(st.lists(st.integers(0, 16), min_size=8, max_size=8))
    @settings(max_examples=200)
    def test_random_integer_quads_match_oracle(self, coords):
        poly = Polygon(tuple(float(v) for v in coords))
        m = rasterize([poly], CoordSpace(18, 18))
        oracle = rasterize_pointwise([poly.vertices], 18, 18)
        assert np.array_equal(m.array, oracle)

    def test_convex_area_close_to_analytic(self):
        # shoelace area vs rasterized area, within the half-pixel sampling bound
        poly = Polygon((3, 2, 47, 5, 44, 41, 7, 38))
        xs, ys = poly.xs, poly.ys
        shoelace = 0.0
        for i in range(4):
            j = (i + 1) % 4
            shoelace += xs[i] * ys[j] - xs[j] * ys[i]
        analytic = abs(shoelace) / 2
        perimeter = sum(
            math.hypot(xs[(i + 1) % 4] - xs[i], ys[(i + 1) % 4] - ys[i]) for i in range(4)
        )
        m = rasterize([poly], CoordSpace(50, 50))
        assert abs(m.area - analytic) <= perimeter


class TestRle:
    def test_all_zero(self):
        assert rle_encode(mask_of([[0, 0, 0], [0, 0, 0]])).counts == (6,)

    def test_single_pixel_top_left(self):
        # column-major walk of a 2x2 mask with (row 0, col 0) set: 1,0,0,0
        assert rle_encode(mask_of([[1, 0], [0, 0]])).counts == (0, 1, 3)

    def test_all_one(self):
        m = BinaryMask.full(CoordSpace(5, 3))
        assert rle_encode(m).counts == (0, 15)

    def test_round_trip_fixtures(self):
        for m in (mask_of([[0, 0, 0], [0, 0, 0]]), mask_of([[1, 0], [0, 0]]), BinaryMask.full(CoordSpace(5, 3))):
            assert rle_decode(rle_encode(m)) == m

    def test_matches_walk_oracle(self, rng):
        for _ in range(50):
            arr = rng.random((rng.integers(1, 20), rng.integers(1, 20))) < 0.4
            m = BinaryMask(arr)
            assert list(rle_encode(m).counts) == rle_encode_walk(arr)

    @given(random_mask)
    @settings(max_examples=300)
    def test_round_trip_random(self, m):
        assert rle_decode(rle_encode(m)) == m

    def test_sum_mismatch_rejected(self):
        with pytest.raises(CorruptRle):
            RleMask(width=2, height=2, counts=(1, 1))

    def test_negative_count_rejected(self):
        with pytest.raises(CorruptRle):
            RleMask(width=2, height=2, counts=(-1, 5))

    def test_json_shape_height_first(self):
        r = rle_encode(mask_of([[1, 0], [0, 0]]))
        assert r.to_json() == {"size": [2, 2], "counts": [0, 1, 3]}
        assert RleMask.from_json(r.to_json()) == r


class TestMaskIou:
    def test_identical(self):
        m = mask_of([[1, 1], [0, 1]])
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        assert mask_iou(mask_of([[1, 0]]), mask_of([[0, 1]])) == 0.0

    def test_constructed_30_over_40(self):
        a = np.zeros(64, dtype=bool)
        b = np.zeros(64, dtype=bool)
        a[0:35] = True
        b[5:40] = True
        a, b = BinaryMask(a.reshape(8, 8)), BinaryMask(b.reshape(8, 8))
        inter, union = mask_counts_loop(a.array, b.array)
        assert (inter, union) == (30, 40)
        assert mask_iou(a, b) == 0.75

    def test_both_empty_vacuous(self):
        z = BinaryMask.zeros(CoordSpace(3, 3))
        assert mask_iou(z, z) == 1.0

    def test_one_empty(self):
        z = BinaryMask.zeros(CoordSpace(2, 1))
        assert mask_iou(z, mask_of([[1, 1]])) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mask_iou(BinaryMask.zeros(CoordSpace(2, 2)), BinaryMask.zeros(CoordSpace(3, 2)))

    def test_matches_loop_oracle(self, rng):
        for _ in range(100):
            shape = (rng.integers(1, 16), rng.integers(1, 16))
            a = BinaryMask(rng.random(shape) < 0.5)
            b = BinaryMask(rng.random(shape) < 0.5)
            assert mask_iou(a, b) == mask_iou_loop(a.array, b.array)


class TestMaskUnion:
    def test_single(self):
        m = mask_of([[1, 0], [1, 1]])
        assert mask_union([m]) == m

    def test_zero_is_identity(self):
        m = mask_of([[1, 0], [1, 1]])
        assert mask_union([m, BinaryMask.zeros(CoordSpace(2, 2))]) == m

    def test_complementary_halves(self):
        top = mask_of([[1, 1], [0, 0]])
        bottom = mask_of([[0, 0], [1, 1]])
        assert mask_union([top, bottom]) == BinaryMask.full(CoordSpace(2, 2))

    def test_area_bounds(self, rng):
        masks = [BinaryMask(rng.random((6, 7)) < 0.3) for _ in range(4)]
        u = mask_union(masks)
        assert u.area >= max(m.area for m in masks)
        assert u.area <= sum(m.area for m in masks)

    def test_empty_list(self):
        with pytest.raises(ShapeError):
            mask_union([])


class TestDistanceToForeground:
    def test_on_foreground_pixel(self):
        m = mask_of([[0, 0], [0, 1]])
        assert distance_to_foreground(m, Point2(1.5, 1.5), CoordSpace(2, 2)) == 0.0
        # anywhere on the pixel counts, not just its center
        assert distance_to_foreground(m, Point2(1.1, 1.9), CoordSpace(2, 2)) == 0.0

    def test_hand_distance(self):
        arr = np.zeros((10, 10), dtype=bool)
        arr[5, 5] = True
        m = BinaryMask(arr)
        assert distance_to_foreground(m, Point2(5.5, 8.5), CoordSpace(10, 10)) == 3.0

    def test_empty_mask_sentinel(self):
        z = BinaryMask.zeros(CoordSpace(4, 4))
        assert distance_to_foreground(z, Point2(1, 1), CoordSpace(4, 4)) == math.inf

    def test_space_mismatch(self):
        with pytest.raises(ShapeError):
            distance_to_foreground(BinaryMask.zeros(CoordSpace(4, 4)), Point2(0, 0), CoordSpace(5, 4))


def test_mask_immutable():
    m = mask_of([[1, 0]])
    with pytest.raises(ValueError):
        m.array[0, 0] = False
