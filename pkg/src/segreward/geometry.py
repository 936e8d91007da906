"""Coordinate spaces, boxes, points, and the scalar predicates built on them.

All rewards and metrics reduce to a handful of operations here: linear
rescaling between pixel space and the normalized 1000x1000 space, box
IoU / L1, and point containment and distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidGeometry

__all__ = [
    "CoordSpace",
    "Box",
    "Point2",
    "NORMALIZED_SPACE",
    "rescale_point",
    "rescale_box",
    "normalize_box",
    "box_area",
    "box_center",
    "box_iou",
    "box_l1",
    "point_in_box",
    "point_distance",
]


@dataclass(frozen=True)
class CoordSpace:
    """A width x height coordinate space (pixels or abstract units)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidGeometry(f"coordinate space must be >= 1x1, got {self.width}x{self.height}")


#: The normalized coordinate space every model output lives in.
NORMALIZED_SPACE = CoordSpace(1000, 1000)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [x1, y1, x2, y2]; use normalize_box to order corners."""

    x1: float
    y1: float
    x2: float
    y2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def rescale_point(p: Point2, src: CoordSpace, dst: CoordSpace) -> Point2:
    """Map a point linearly between spaces, preserving the origin."""
    return Point2(p.x * dst.width / src.width, p.y * dst.height / src.height)


def rescale_box(b: Box, src: CoordSpace, dst: CoordSpace) -> Box:
    """Rescale both corners with rescale_point."""
    a = rescale_point(Point2(b.x1, b.y1), src, dst)
    c = rescale_point(Point2(b.x2, b.y2), src, dst)
    return Box(a.x, a.y, c.x, c.y)


def normalize_box(b: Box) -> Box:
    """Reorder corners so x1 <= x2 and y1 <= y2."""
    for v in b.as_tuple():
        if not math.isfinite(v):
            raise InvalidGeometry(f"non-finite box coordinate in {b.as_tuple()}")
    return Box(min(b.x1, b.x2), min(b.y1, b.y2), max(b.x1, b.x2), max(b.y1, b.y2))


def box_area(b: Box) -> float:
    """Continuous-coordinate area (x2-x1)*(y2-y1); degenerate boxes have 0."""
    return max(0.0, b.x2 - b.x1) * max(0.0, b.y2 - b.y1)


def box_center(b: Box) -> Point2:
    return Point2((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0)


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two normalized boxes; 0 when the union is empty."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def box_l1(a: Box, b: Box) -> float:
    """Sum of absolute coordinate differences."""
    return (
        abs(a.x1 - b.x1) + abs(a.y1 - b.y1) + abs(a.x2 - b.x2) + abs(a.y2 - b.y2)
    )


def point_in_box(p: Point2, b: Box) -> bool:
    """Inclusive containment: boundary points count as inside."""
    return b.x1 <= p.x <= b.x2 and b.y1 <= p.y <= b.y2


def point_distance(a: Point2, b: Point2) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
