"""End-to-end prediction evaluation: parse responses, prompt the segmenter,
union instance masks, and reduce everything to SampleEvaluation records."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .dataset import AnnotationRecord, PredictionRecord, to_ground_truth
from .errors import AlignmentError
from .geometry import NORMALIZED_SPACE, Box, box_iou, rescale_box, rescale_point
from .mask import BinaryMask, mask_union, rle_decode
from .metrics import SampleEvaluation
from .parsing import parse_response
from .rewards import GroundTruth
from .segmenter import Segmenter, SegmentRequest

__all__ = ["evaluate_sample", "evaluate_predictions", "EvaluationBatch"]


class EvaluationBatch:
    """Per-sample evaluations plus the box sets the AP family needs."""

    def __init__(self, evals: list[SampleEvaluation], box_preds: dict, box_gts: dict):
        self.evals = evals
        self.box_preds = box_preds
        self.box_gts = box_gts


def _segment_instances(prediction, gt: GroundTruth, seg: Segmenter, prompt_mode: str) -> BinaryMask:
    masks = []
    for inst in prediction.instances:
        req = SegmentRequest(
            box=rescale_box(inst.bbox, NORMALIZED_SPACE, gt.image),
            pos_points=tuple(rescale_point(p, NORMALIZED_SPACE, gt.image) for p in inst.points),
            neg_points=tuple(rescale_point(p, NORMALIZED_SPACE, gt.image) for p in inst.neg_points),
            prompt_mode=prompt_mode,
            image_ref=gt.image_ref,
        )
        masks.append(rle_decode(seg.segment(req).mask))
    return mask_union(masks)


def evaluate_sample(
    rec: AnnotationRecord,
    raw_response: str,
    seg: Segmenter,
    prompt_mode: str = "box_2pt",
) -> tuple[SampleEvaluation, list[Box], list[Box]]:
    """Evaluate one prediction; returns the sample record and its box lists."""
    gt = to_ground_truth(rec)
    parsed = parse_response(raw_response)
    prediction = parsed.prediction
    predicted_no_target = prediction is not None and prediction.no_target

    gt_union = mask_union(list(gt.gt_masks)) if gt.gt_masks else BinaryMask.zeros(gt.image)
    if prediction is not None and not prediction.no_target:
        pred_mask = _segment_instances(prediction, gt, seg, prompt_mode)
        pred_boxes = [inst.bbox for inst in prediction.instances]
    else:
        pred_mask = BinaryMask.zeros(gt.image)
        pred_boxes = []

    inter = int((pred_mask.array & gt_union.array).sum())
    union = int((pred_mask.array | gt_union.array).sum())
    gt_boxes = list(gt.gt_boxes)
    box_best = None
    if pred_boxes and gt_boxes:
        box_best = max(box_iou(p, g) for p in pred_boxes for g in gt_boxes)

    evaluation = SampleEvaluation(
        sample_id=rec.sample_id,
        intersection=inter,
        union=union,
        is_no_target_gt=rec.is_no_target,
        predicted_no_target=predicted_no_target,
        box_iou_best=box_best,
    )
    return evaluation, pred_boxes, gt_boxes


def evaluate_predictions(
    records: Sequence[AnnotationRecord],
    predictions: Sequence[PredictionRecord],
    seg: Segmenter,
    prompt_mode: str = "box_2pt",
    jobs: int = 1,
) -> EvaluationBatch:
    """Evaluate aligned prediction/annotation sets; output order follows records."""
    by_id = {p.sample_id: p for p in predictions}
    record_ids = {r.sample_id for r in records}
    if set(by_id) != record_ids:
        diff = sorted(set(by_id) ^ record_ids)[:5]
        raise AlignmentError(f"predictions do not align with annotations, e.g. {diff}")

    def run(rec: AnnotationRecord):
        return evaluate_sample(rec, by_id[rec.sample_id].raw_response, seg, prompt_mode)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, records))
    else:
        results = [run(rec) for rec in records]

    evals = [r[0] for r in results]
    box_preds = {}
    box_gts = {}
    for rec, (_, pb, gb) in zip(records, results):
        if not rec.is_no_target:
            box_preds[rec.sample_id] = pb
            box_gts[rec.sample_id] = gb
    return EvaluationBatch(evals, box_preds, box_gts)
