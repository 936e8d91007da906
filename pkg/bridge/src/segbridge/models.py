"""Model layers behind the wire protocol: echo (stub rule) and real checkpoint.

The echo model replays the deterministic stub-segmenter rule over a scene
file, which makes full wire-protocol integration tests possible with no
checkpoint and no GPU. The real model wraps a promptable-segmentation
checkpoint through transformers and is only importable where torch is
installed.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

from segreward.errors import SegmenterUnavailable, UnknownImage
from segreward.segmenter import (
    SceneStore,
    SegmentRequest,
    SegmentResponse,
    stub_segment,
)

__all__ = ["EchoModel", "RealCheckpointModel", "build_point_prompts", "load_scene_store"]


def build_point_prompts(req: SegmentRequest) -> tuple[list[list[float]], list[int]]:
    """Point prompts the model actually receives under the request's mode.

    box_only passes no point prompts at all; the other modes pass the admitted
    positive points with label 1 and any negative points with label 0.
    """
    if req.prompt_mode == "box_only":
        return [], []
    points = [[p.x, p.y] for p in req.admitted_pos_points()]
    labels = [1] * len(points)
    for p in req.neg_points:
        points.append([p.x, p.y])
        labels.append(0)
    return points, labels


def load_scene_store(path: str | Path) -> SceneStore:
    with open(path, "r", encoding="utf-8") as fh:
        return SceneStore.from_json(json.load(fh))


class EchoModel:
    """Deterministic stand-in: the stub rule over a scene store."""

    name = "echo-stub"

    def __init__(self, store: SceneStore):
        self.store = store

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        if not isinstance(req.image_ref, str):
            raise UnknownImage("echo mode resolves images by id only")
        scene = self.store.scenes.get(req.image_ref)
        if scene is None:
            raise UnknownImage(f"no scene for image id {req.image_ref!r}")
        return stub_segment(req, self.store.scenes[req.image_ref])


class RealCheckpointModel:
    """Frozen promptable-segmenter checkpoint behind the same interface.

    Lazily imports torch/transformers; raises SegmenterUnavailable with a
    clear message when the stack is missing. Images are resolved by id under
    image_root or decoded from an inline PNG payload. The PIL image is cached
    per id; the model forward recomputes embeddings per call, which is
    acceptable for the bridge's request rates.
    """

    def __init__(self, checkpoint: str, image_root: Path | None):
        self.name = checkpoint
        self.image_root = Path(image_root) if image_root is not None else None
        try:
            import torch
            from transformers import Sam2Model, Sam2Processor
        except ImportError as exc:
            raise SegmenterUnavailable(
                f"real checkpoint backend needs torch+transformers: {exc}"
            ) from exc
        self._torch = torch
        self._device = "cuda" if torch.cuda.is_available() else "cpu"
        self._processor = Sam2Processor.from_pretrained(checkpoint)
        self._model = Sam2Model.from_pretrained(checkpoint).to(self._device).eval()

    @functools.lru_cache(maxsize=64)
    def _load_by_id(self, image_id: str):
        from PIL import Image

        if self.image_root is None:
            raise UnknownImage("server has no image root configured")
        path = self.image_root / image_id
        if not path.is_file():
            raise UnknownImage(f"no image file for id {image_id!r}")
        return Image.open(path).convert("RGB")

    def _load_image(self, ref):
        if isinstance(ref, bytes):
            import io

            from PIL import Image

            return Image.open(io.BytesIO(ref)).convert("RGB")
        return self._load_by_id(ref)

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        import numpy as np

        from segreward.mask import BinaryMask, rle_encode

        image = self._load_image(req.image_ref)
        points, labels = build_point_prompts(req)
        kwargs = {"input_boxes": [[[req.box.x1, req.box.y1, req.box.x2, req.box.y2]]]}
        if points:
            kwargs["input_points"] = [[points]]
            kwargs["input_labels"] = [[labels]]
        inputs = self._processor(images=image, return_tensors="pt", **kwargs).to(self._device)
        with self._torch.no_grad():
            outputs = self._model(**inputs, multimask_output=True)
        masks = self._processor.post_process_masks(
            outputs.pred_masks.cpu(), inputs["original_sizes"].cpu()
        )[0][0]
        scores = outputs.iou_scores.cpu().reshape(-1)
        best = int(scores.argmax())
        mask = BinaryMask(np.asarray(masks[best].cpu(), dtype=bool))
        return SegmentResponse(mask=rle_encode(mask), confidence=float(scores[best]))
