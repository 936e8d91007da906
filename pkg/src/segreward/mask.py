"""Dense binary masks, COCO-style run-length encoding, and polygon rasterization.

Masks are immutable numpy bool arrays. RLE follows the COCO uncompressed
convention: column-major pixel order, alternating run lengths starting with
background. Rasterization samples pixel centers (c+0.5, r+0.5) under the
even-odd rule via a scanline fill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorruptRle, InvalidGeometry, ShapeError
from .geometry import Box, CoordSpace, Point2

__all__ = [
    "BinaryMask",
    "RleMask",
    "Polygon",
    "rasterize",
    "rle_encode",
    "rle_decode",
    "mask_iou",
    "mask_union",
    "distance_to_foreground",
    "box_to_polygon",
]


class BinaryMask:
    """A width x height binary raster, row-major, immutable after construction."""

    __slots__ = ("_arr",)

    def __init__(self, array: np.ndarray):
        arr = np.asarray(array, dtype=bool)
        if arr.ndim != 2:
            raise ShapeError(f"mask array must be 2-D, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        self._arr = arr

    @classmethod
    def zeros(cls, space: CoordSpace) -> "BinaryMask":
        return cls(np.zeros((space.height, space.width), dtype=bool))

    @classmethod
    def full(cls, space: CoordSpace) -> "BinaryMask":
        return cls(np.ones((space.height, space.width), dtype=bool))

    @property
    def array(self) -> np.ndarray:
        """Read-only (height, width) bool array."""
        return self._arr

    @property
    def width(self) -> int:
        return self._arr.shape[1]

    @property
    def height(self) -> int:
        return self._arr.shape[0]

    @property
    def space(self) -> CoordSpace:
        return CoordSpace(self.width, self.height)

    @property
    def area(self) -> int:
        return int(self._arr.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self._arr.shape == other._arr.shape and bool(np.array_equal(self._arr, other._arr))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


@dataclass(frozen=True)
class RleMask:
    """Uncompressed COCO RLE: column-major runs, background first."""

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise CorruptRle(f"negative run length in {self.counts[:8]}...")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise CorruptRle(
                f"counts sum to {total}, expected {self.width * self.height} for {self.width}x{self.height}"
            )

    def to_json(self) -> dict:
        """COCO-convention JSON shape, height first."""
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = [int(c) for c in obj["counts"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRle(f"malformed RLE object: {exc}") from exc
        return cls(width=int(w), height=int(h), counts=tuple(counts))


@dataclass(frozen=True)
class Polygon:
    """Flat vertex sequence [x1, y1, x2, y2, ...] in pixel coordinates."""

    vertices: tuple[float, ...]

    def __post_init__(self):
        if len(self.vertices) < 6 or len(self.vertices) % 2 != 0:
            raise InvalidGeometry(f"polygon needs >= 3 (x, y) vertices, got {len(self.vertices)} values")
        if not all(math.isfinite(v) for v in self.vertices):
            raise InvalidGeometry("non-finite polygon coordinate")

    @property
    def xs(self) -> tuple[float, ...]:
        return self.vertices[0::2]

    @property
    def ys(self) -> tuple[float, ...]:
        return self.vertices[1::2]


def box_to_polygon(b: Box) -> Polygon:
    """Rectangle as a 4-vertex polygon (for rasterizing box prompts)."""
    return Polygon((b.x1, b.y1, b.x2, b.y1, b.x2, b.y2, b.x1, b.y2))


def _fill_polygon(out: np.ndarray, poly: Polygon) -> None:
    # Scanline even-odd fill at half-pixel centers. An edge crosses the line
    # y = r + 0.5 under the half-open rule min(y) <= y < max(y), which counts
    # shared vertices exactly once.
    height, width = out.shape
    xs = np.asarray(poly.xs, dtype=float)
    ys = np.asarray(poly.ys, dtype=float)
    x2 = np.roll(xs, -1)
    y2 = np.roll(ys, -1)
    keep = ys != y2  # horizontal edges never cross a scanline
    if not keep.any():
        return
    ex1, ey1, ex2, ey2 = xs[keep], ys[keep], x2[keep], y2[keep]
    lo = np.minimum(ey1, ey2)
    hi = np.maximum(ey1, ey2)
    r_min = max(0, int(math.ceil(lo.min() - 0.5)))
    r_max = min(height - 1, int(math.floor(hi.max() - 0.5)))
    for r in range(r_min, r_max + 1):
        y = r + 0.5
        crossing = (lo <= y) & (y < hi)
        if not crossing.any():
            continue
        # same expression shape as the textbook crossing test, so an interval
        # fill and a per-point parity test agree bit-for-bit
        x_cross = np.sort(
            ex1[crossing]
            + (y - ey1[crossing]) * (ex2[crossing] - ex1[crossing]) / (ey2[crossing] - ey1[crossing])
        )
        for k in range(0, len(x_cross) - 1, 2):
            # pixel centers in [x_left, x_right)
            c0 = max(0, int(math.ceil(x_cross[k] - 0.5)))
            c1 = min(width, int(math.ceil(x_cross[k + 1] - 0.5)))
            if c1 > c0:
                out[r, c0:c1] = True


def rasterize(polys: list[Polygon], space: CoordSpace) -> BinaryMask:
    """Union of even-odd filled polygons sampled at pixel centers."""
    if not polys:
        raise InvalidGeometry("rasterize needs at least one polygon")
    out = np.zeros((space.height, space.width), dtype=bool)
    for poly in polys:
        _fill_polygon(out, poly)
    return BinaryMask(out)


def rle_encode(m: BinaryMask) -> RleMask:
    """Column-major run lengths, first run counting background pixels."""
    flat = m.array.flatten(order="F")
    if flat.size == 0:  # unreachable: spaces are >= 1x1
        return RleMask(m.width, m.height, ())
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size]))).tolist()
    if flat[0]:
        runs = [0] + runs
    return RleMask(m.width, m.height, tuple(int(r) for r in runs))


def rle_decode(r: RleMask) -> BinaryMask:
    """Inverse of rle_encode; RleMask construction already validated the counts."""
    values = np.zeros(len(r.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(r.counts, dtype=np.int64))
    return BinaryMask(flat.reshape((r.height, r.width), order="F"))


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a & b| / |a | b|; both-empty masks agree vacuously (1.0)."""
    if (a.width, a.height) != (b.width, b.height):
        raise ShapeError(f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    inter = int(np.logical_and(a.array, b.array).sum())
    union = int(np.logical_or(a.array, b.array).sum())
    if union == 0:
        return 1.0
    return inter / union


def mask_union(masks: list[BinaryMask]) -> BinaryMask:
    """Pixel-wise OR of equally sized masks."""
    if not masks:
        raise ShapeError("mask_union needs at least one mask")
    first = masks[0]
    acc = first.array.copy()
    for m in masks[1:]:
        if (m.width, m.height) != (first.width, first.height):
            raise ShapeError(f"mask shapes differ: {first.width}x{first.height} vs {m.width}x{m.height}")
        np.logical_or(acc, m.array, out=acc)
    return BinaryMask(acc)


def distance_to_foreground(m: BinaryMask, p: Point2, space: CoordSpace) -> float:
    """Euclidean distance from p (pixel space) to the nearest foreground pixel center.

    Returns math.inf for an empty mask and 0.0 when p falls on a foreground
    pixel center.
    """
    if (space.width, space.height) != (m.width, m.height):
        raise ShapeError(f"space {space.width}x{space.height} does not match mask {m.width}x{m.height}")
    rows, cols = np.nonzero(m.array)
    if rows.size == 0:
        return math.inf
    col, row = int(math.floor(p.x)), int(math.floor(p.y))
    if 0 <= row < m.height and 0 <= col < m.width and m.array[row, col]:
        return 0.0
    dx = (cols + 0.5) - p.x
    dy = (rows + 0.5) - p.y
    return float(np.sqrt(dx * dx + dy * dy).min())
