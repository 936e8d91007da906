"""Promptable-segmenter interface, deterministic stub, and HTTP remote client.

A segmenter turns a box plus positive/negative point prompts into a single
mask (its highest-confidence candidate) with a confidence score. The stub
implements an analytically predictable selection rule over a synthetic scene
so rewards and pipelines can be verified without a model. The remote client
speaks the ``POST /v1/segment`` wire protocol.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import requests

from .errors import CorruptRle, SegmenterUnavailable, ShapeError, UnknownImage
from .geometry import Box, CoordSpace, Point2, box_iou, normalize_box
from .mask import BinaryMask, RleMask, box_to_polygon, rasterize, rle_decode, rle_encode

__all__ = [
    "PROMPT_MODES",
    "SegmentRequest",
    "SegmentResponse",
    "Segmenter",
    "SceneObject",
    "SyntheticScene",
    "SceneStore",
    "stub_segment",
    "StubSegmenter",
    "SceneStoreSegmenter",
    "Endpoint",
    "remote_segment",
    "RemoteSegmenter",
    "request_to_json",
    "request_from_json",
    "response_to_json",
    "response_from_json",
]

PROMPT_MODES = ("box_only", "box_1pt", "box_2pt")


@dataclass(frozen=True)
class SegmentRequest:
    """Pixel-space prompts for one instance; callers rescale from [0,1000]."""

    box: Box
    pos_points: tuple[Point2, ...] = ()
    neg_points: tuple[Point2, ...] = ()
    prompt_mode: str = "box_2pt"
    image_ref: str | bytes | None = None

    def __post_init__(self):
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"prompt_mode must be one of {PROMPT_MODES}, got {self.prompt_mode!r}")
        needed = {"box_only": 0, "box_1pt": 1, "box_2pt": 2}[self.prompt_mode]
        if len(self.pos_points) < needed:
            raise ValueError(f"{self.prompt_mode} needs >= {needed} positive points, got {len(self.pos_points)}")
        if len(self.pos_points) > 2 or len(self.neg_points) > 2:
            raise ValueError("at most two positive and two negative points")

    def admitted_pos_points(self) -> tuple[Point2, ...]:
        """Positive points the prompt mode actually uses."""
        if self.prompt_mode == "box_only":
            return ()
        if self.prompt_mode == "box_1pt":
            return self.pos_points[:1]
        return self.pos_points[:2]


@dataclass(frozen=True)
class SegmentResponse:
    mask: RleMask
    confidence: float


class Segmenter(Protocol):
    def segment(self, req: SegmentRequest) -> SegmentResponse: ...


# ---------------------------------------------------------------------------
# synthetic scenes and the deterministic stub


@dataclass(frozen=True)
class SceneObject:
    """One object in a synthetic scene; mask must be non-empty."""

    mask: BinaryMask

    def __post_init__(self):
        if self.mask.area == 0:
            raise ShapeError("scene object mask is empty")

    def tight_box(self) -> Box:
        rows, cols = np.nonzero(self.mask.array)
        return Box(float(cols.min()), float(rows.min()), float(cols.max() + 1), float(rows.max() + 1))


@dataclass(frozen=True)
class SyntheticScene:
    space: CoordSpace
    objects: tuple[SceneObject, ...] = ()

    def __post_init__(self):
        for obj in self.objects:
            if obj.mask.space != self.space:
                raise ShapeError("scene object mask does not match scene space")

    def to_json(self) -> dict:
        return {
            "size": [self.space.height, self.space.width],
            "objects": [{"mask": rle_encode(o.mask).to_json()} for o in self.objects],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticScene":
        h, w = obj["size"]
        objects = tuple(SceneObject(rle_decode(RleMask.from_json(o["mask"]))) for o in obj.get("objects", []))
        return cls(space=CoordSpace(int(w), int(h)), objects=objects)


@dataclass
class SceneStore:
    """image_id -> scene mapping, the echo server's whole world."""

    scenes: dict[str, SyntheticScene] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"images": {k: v.to_json() for k, v in sorted(self.scenes.items())}}

    @classmethod
    def from_json(cls, obj: dict) -> "SceneStore":
        return cls({k: SyntheticScene.from_json(v) for k, v in obj.get("images", {}).items()})


def _point_in_mask(m: BinaryMask, p: Point2) -> bool:
    col, row = int(math.floor(p.x)), int(math.floor(p.y))
    return 0 <= row < m.height and 0 <= col < m.width and bool(m.array[row, col])


def stub_segment(req: SegmentRequest, scene: SyntheticScene) -> SegmentResponse:
    """Deterministic selection rule standing in for a promptable segmenter.

    Scores every scene object as (tight-box IoU with the request box)
    + 1 if any admitted positive point falls inside the object's mask
    - 1 per negative point inside it, and returns the best-scoring object's
    mask with the tight-box IoU as confidence. Ties break toward the lowest
    object index. When no object's tight box overlaps the request box at all,
    the request box itself is rasterized and returned with confidence 0.1.
    """
    box = normalize_box(req.box)
    pos = req.admitted_pos_points()

    best_idx = -1
    best_score = -math.inf
    best_iou = 0.0
    any_overlap = False
    for idx, obj in enumerate(scene.objects):
        iou = box_iou(box, obj.tight_box())
        if iou > 0.0:
            any_overlap = True
        score = iou
        if any(_point_in_mask(obj.mask, p) for p in pos):
            score += 1.0
        score -= sum(1.0 for p in req.neg_points if _point_in_mask(obj.mask, p))
        if score > best_score:
            best_idx, best_score, best_iou = idx, score, iou

    if not any_overlap or best_idx < 0:
        fallback = rasterize([box_to_polygon(box)], scene.space)
        return SegmentResponse(mask=rle_encode(fallback), confidence=0.1)
    chosen = scene.objects[best_idx]
    return SegmentResponse(mask=rle_encode(chosen.mask), confidence=best_iou)


class StubSegmenter:
    """Stateless segmenter over a single fixed scene."""

    def __init__(self, scene: SyntheticScene):
        self.scene = scene

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        return stub_segment(req, self.scene)


class SceneStoreSegmenter:
    """Routes requests to per-image scenes by image_ref."""

    def __init__(self, store: SceneStore):
        self.store = store

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        if not isinstance(req.image_ref, str):
            raise UnknownImage("scene store needs a string image id")
        scene = self.store.scenes.get(req.image_ref)
        if scene is None:
            raise UnknownImage(f"no scene for image id {req.image_ref!r}")
        return stub_segment(req, scene)


# ---------------------------------------------------------------------------
# wire codec (shared verbatim with the bridge server)


def request_to_json(req: SegmentRequest) -> dict:
    if isinstance(req.image_ref, bytes):
        image = {"png_base64": base64.b64encode(req.image_ref).decode("ascii")}
    elif isinstance(req.image_ref, str):
        image = {"id": req.image_ref}
    else:
        raise ValueError("remote requests need an image id or inline PNG payload")
    return {
        "image": image,
        "box": [req.box.x1, req.box.y1, req.box.x2, req.box.y2],
        "pos_points": [[p.x, p.y] for p in req.pos_points],
        "neg_points": [[p.x, p.y] for p in req.neg_points],
        "mode": req.prompt_mode,
    }


def request_from_json(obj: dict) -> SegmentRequest:
    try:
        image = obj["image"]
        if "id" in image:
            ref: str | bytes = str(image["id"])
        elif "png_base64" in image:
            ref = base64.b64decode(image["png_base64"])
        else:
            raise KeyError("image needs 'id' or 'png_base64'")
        box = Box(*[float(v) for v in obj["box"]])
        pos = tuple(Point2(float(x), float(y)) for x, y in obj.get("pos_points", []))
        neg = tuple(Point2(float(x), float(y)) for x, y in obj.get("neg_points", []))
        mode = obj["mode"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed segment request: {exc}") from exc
    return SegmentRequest(box=box, pos_points=pos, neg_points=neg, prompt_mode=mode, image_ref=ref)


def response_to_json(resp: SegmentResponse) -> dict:
    return {"mask": resp.mask.to_json(), "confidence": resp.confidence}


def response_from_json(obj: dict) -> SegmentResponse:
    # CorruptRle from RleMask.from_json propagates as-is (contract violation)
    try:
        mask = RleMask.from_json(obj["mask"])
        confidence = float(obj["confidence"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed segment response: {exc}") from exc
    return SegmentResponse(mask=mask, confidence=confidence)


# ---------------------------------------------------------------------------
# remote client


@dataclass(frozen=True)
class Endpoint:
    base_url: str
    timeout: float = 10.0


def remote_segment(req: SegmentRequest, endpoint: Endpoint) -> SegmentResponse:
    """Round-trip one request over HTTP; semantics identical to segment()."""
    url = endpoint.base_url.rstrip("/") + "/v1/segment"
    try:
        http = requests.post(url, json=request_to_json(req), timeout=endpoint.timeout)
    except requests.RequestException as exc:
        raise SegmenterUnavailable(f"segment call to {url} failed: {exc}") from exc

    if http.status_code != 200:
        code, message = "unknown", http.text[:200]
        try:
            envelope = http.json().get("error", {})
            code = envelope.get("code", code)
            message = envelope.get("message", message)
        except ValueError:
            pass
        if code == "unknown_image":
            raise UnknownImage(f"{code}: {message}")
        raise SegmenterUnavailable(f"HTTP {http.status_code} {code}: {message}")

    try:
        body = http.json()
    except ValueError as exc:
        raise SegmenterUnavailable(f"non-JSON reply from {url}") from exc
    try:
        resp = response_from_json(body)
    except CorruptRle:
        raise
    except ValueError as exc:
        raise SegmenterUnavailable(str(exc)) from exc
    return resp


class RemoteSegmenter:
    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        return remote_segment(req, self.endpoint)
