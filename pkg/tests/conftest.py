import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segreward.geometry import CoordSpace
from segreward.mask import BinaryMask
from segreward.segmenter import SceneObject, SyntheticScene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rect_mask(space: CoordSpace, x1: int, y1: int, x2: int, y2: int) -> BinaryMask:
    arr = np.zeros((space.height, space.width), dtype=bool)
    arr[y1:y2, x1:x2] = True
    return BinaryMask(arr)


@pytest.fixture
def two_object_scene():
    """Objects A (left) and B (right) on a 100x100 canvas, equal sizes."""
    space = CoordSpace(100, 100)
    a = rect_mask(space, 10, 40, 30, 60)
    b = rect_mask(space, 70, 40, 90, 60)
    return SyntheticScene(space=space, objects=(SceneObject(a), SceneObject(b)))
