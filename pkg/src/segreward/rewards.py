"""Composite rollout rewards: distance-based and segmenter-in-the-loop.

The distance reward combines format validation, a thinking bonus, thresholded
bounding-box accuracy (IoU > 0.5 and an L1 gate), thresholded keypoint
accuracy (minimum distance < 119 in [0,1000] space, points inside the
predicted box), and a non-repetition penalty. It needs no model inference.

The segmenter-in-the-loop reward extends it with three outcome components:
the segmenter mask IoU against ground truth (weight 5.0, the primary signal),
negative-point validity (weight 10.0: inside the predicted box, outside the
matched ground-truth mask, at sufficient distance from its foreground), and
the no-target term (reward 10.0 for correct abstention on empty-target
queries, a penalty for hallucinated boxes).

A failed format hard-gates every semantic component to zero; only the
repetition penalty survives, so degenerate repetitive rollouts rank strictly
below clean-but-wrong ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .geometry import (
    NORMALIZED_SPACE,
    Box,
    CoordSpace,
    Point2,
    box_center,
    box_iou,
    box_l1,
    point_distance,
    point_in_box,
    rescale_box,
    rescale_point,
)
from .mask import BinaryMask, mask_iou, mask_union, rle_decode
from .parsing import ParsedResponse, has_nonempty_think, parse_response, repetition_score
from .segmenter import Segmenter, SegmentRequest

__all__ = [
    "GroundTruth",
    "RewardConfig",
    "RewardBreakdown",
    "COMPONENT_NAMES",
    "distance_reward",
    "sam_loop_reward",
    "score_group",
]

COMPONENT_NAMES = (
    "format",
    "think",
    "bbox",
    "point",
    "repetition",
    "sam_iou",
    "neg_validity",
    "no_target",
)

REWARD_MODES = ("distance", "sam_loop")


@dataclass(frozen=True)
class GroundTruth:
    """Reference annotation for one sample.

    Boxes and points live in [0,1000] space; masks in pixel space. Masks may
    be absent (empty tuple) for distance-only training data.
    """

    image: CoordSpace
    gt_boxes: tuple[Box, ...] = ()
    gt_masks: tuple[BinaryMask, ...] = ()
    gt_points: tuple[tuple[Point2, Point2], ...] | None = None
    is_no_target: bool = False
    image_ref: str | None = None

    def __post_init__(self):
        if self.is_no_target and (self.gt_boxes or self.gt_masks):
            raise ConsistencyError("no-target ground truth cannot carry boxes or masks")
        if not self.is_no_target and not self.gt_boxes:
            raise ConsistencyError("target ground truth needs at least one box")
        if self.gt_masks and len(self.gt_masks) != len(self.gt_boxes):
            raise ConsistencyError(
                f"{len(self.gt_masks)} masks vs {len(self.gt_boxes)} boxes"
            )
        if self.gt_points is not None and len(self.gt_points) != len(self.gt_boxes):
            raise ConsistencyError(
                f"{len(self.gt_points)} point pairs vs {len(self.gt_boxes)} boxes"
            )


@dataclass(frozen=True)
class RewardConfig:
    """Weights and thresholds for both reward configurations."""

    iou_weight: float = 5.0
    neg_weight: float = 10.0
    no_target_reward: float = 10.0
    hallucination_penalty: float = -10.0
    format_reward: float = 1.0
    think_bonus: float = 0.25
    box_iou_threshold: float = 0.5
    box_l1_threshold: float = 50.0
    point_dist_threshold: float = 119.0
    neg_margin: float = 20.0
    repetition_penalty_weight: float = 1.0
    # missing <think> is unbonused, not penalized, unless this is raised
    missing_think_penalty: float = 0.0
    # the G recipe keeps the distance bbox/point terms alongside R1-R3
    sam_loop_distance_terms: bool = True

    def __post_init__(self):
        for name in ("box_iou_threshold", "box_l1_threshold", "point_dist_threshold", "neg_margin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("iou_weight", "neg_weight", "no_target_reward", "hallucination_penalty",
                     "format_reward", "think_bonus", "repetition_penalty_weight", "missing_think_penalty"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class RewardBreakdown:
    total: float
    components: dict[str, float]
    faults: tuple[str, ...] = ()


def _make_breakdown(components: dict[str, float], faults) -> RewardBreakdown:
    # + 0.0 turns negative zeros into plain zeros so serialized output is tidy
    full = {name: float(components.get(name, 0.0)) + 0.0 for name in COMPONENT_NAMES}
    total = math.fsum(full.values())
    return RewardBreakdown(total=total, components=full, faults=tuple(faults))


def _greedy_match(pred_boxes: list[Box], gt_boxes: tuple[Box, ...]) -> list[int | None]:
    """Each predicted box takes the unmatched GT box of highest IoU, in order."""
    free = list(range(len(gt_boxes)))
    assignment: list[int | None] = []
    for pb in pred_boxes:
        if not free:
            assignment.append(None)
            continue
        best = max(free, key=lambda gi: (box_iou(pb, gt_boxes[gi]), -gi))
        free.remove(best)
        assignment.append(best)
    return assignment


def _bbox_point_components(pr: ParsedResponse, gt: GroundTruth, cfg: RewardConfig):
    """Mean thresholded box and point accuracy plus the greedy assignment."""
    instances = pr.prediction.instances
    assignment = _greedy_match([i.bbox for i in instances], gt.gt_boxes)

    bbox_hits = []
    point_hits = []
    for inst, gi in zip(instances, assignment):
        if gi is None:
            bbox_hits.append(0.0)
            point_hits.append(0.0)
            continue
        gt_box = gt.gt_boxes[gi]
        iou_ok = box_iou(inst.bbox, gt_box) > cfg.box_iou_threshold
        l1_ok = box_l1(inst.bbox, gt_box) < cfg.box_l1_threshold
        bbox_hits.append(1.0 if (iou_ok and l1_ok) else 0.0)

        if gt.gt_points is not None:
            targets = gt.gt_points[gi]
        else:
            targets = (box_center(gt_box),)
        min_dist = min(point_distance(p, t) for p in inst.points for t in targets)
        inside = all(point_in_box(p, inst.bbox) for p in inst.points)
        point_hits.append(1.0 if (min_dist < cfg.point_dist_threshold and inside) else 0.0)

    n = len(instances)
    return sum(bbox_hits) / n, sum(point_hits) / n, assignment


def distance_reward(pr: ParsedResponse, gt: GroundTruth, cfg: RewardConfig) -> RewardBreakdown:
    """Distance-based composite reward; totalized, never raises on bad rollouts."""
    comps = {"repetition": -cfg.repetition_penalty_weight * repetition_score(pr.raw)}
    if not pr.format_ok:
        return _make_breakdown(comps, pr.format_faults)

    comps["format"] = cfg.format_reward
    comps["think"] = cfg.think_bonus if has_nonempty_think(pr) else -cfg.missing_think_penalty

    pred = pr.prediction
    if gt.is_no_target:
        comps["no_target"] = cfg.no_target_reward if pred.no_target else cfg.hallucination_penalty
    elif not pred.no_target:
        bbox, point, _ = _bbox_point_components(pr, gt, cfg)
        comps["bbox"] = bbox
        comps["point"] = point
    return _make_breakdown(comps, pr.format_faults)


def _point_in_mask(m: BinaryMask, p_px: Point2) -> bool:
    col, row = int(math.floor(p_px.x)), int(math.floor(p_px.y))
    col = min(max(col, 0), m.width - 1)
    row = min(max(row, 0), m.height - 1)
    return bool(m.array[row, col])


def _normalized_distance_to_foreground(m: BinaryMask, p_norm: Point2) -> float:
    # distance measured in [0,1000] units with per-axis scaling, so anisotropic
    # images keep the margin test exact
    rows, cols = np.nonzero(m.array)
    if rows.size == 0:
        return math.inf
    dx = (cols + 0.5) * 1000.0 / m.width - p_norm.x
    dy = (rows + 0.5) * 1000.0 / m.height - p_norm.y
    return float(np.sqrt(dx * dx + dy * dy).min())


def _neg_validity_fraction(pr: ParsedResponse, gt: GroundTruth, cfg: RewardConfig,
                           assignment: list[int | None]) -> float:
    valid = 0
    total = 0
    for inst, gi in zip(pr.prediction.instances, assignment):
        for p in inst.neg_points:
            total += 1
            if gi is None or not point_in_box(p, inst.bbox):
                continue
            gt_mask = gt.gt_masks[gi]
            p_px = rescale_point(p, NORMALIZED_SPACE, gt.image)
            if _point_in_mask(gt_mask, p_px):
                continue
            if _normalized_distance_to_foreground(gt_mask, p) >= cfg.neg_margin:
                valid += 1
    if total == 0:
        return 0.0
    return valid / total


def sam_loop_reward(pr: ParsedResponse, gt: GroundTruth, seg: Segmenter, cfg: RewardConfig) -> RewardBreakdown:
    """Distance reward extended with segmenter IoU, negative-point validity, and
    the no-target term. Segmenter errors propagate to the caller."""
    comps = {"repetition": -cfg.repetition_penalty_weight * repetition_score(pr.raw)}
    if not pr.format_ok:
        return _make_breakdown(comps, pr.format_faults)

    comps["format"] = cfg.format_reward
    comps["think"] = cfg.think_bonus if has_nonempty_think(pr) else -cfg.missing_think_penalty

    pred = pr.prediction
    if gt.is_no_target:
        comps["no_target"] = cfg.no_target_reward if pred.no_target else cfg.hallucination_penalty
        return _make_breakdown(comps, pr.format_faults)
    if pred.no_target:
        # abstained on a real target: nothing to segment, semantic components 0
        return _make_breakdown(comps, pr.format_faults)

    if not gt.gt_masks:
        raise ConsistencyError("segmenter-in-the-loop reward needs ground-truth masks")

    bbox, point, assignment = _bbox_point_components(pr, gt, cfg)
    if cfg.sam_loop_distance_terms:
        comps["bbox"] = bbox
        comps["point"] = point

    pred_masks = []
    for inst in pred.instances:
        req = SegmentRequest(
            box=rescale_box(inst.bbox, NORMALIZED_SPACE, gt.image),
            pos_points=tuple(rescale_point(p, NORMALIZED_SPACE, gt.image) for p in inst.points),
            neg_points=tuple(rescale_point(p, NORMALIZED_SPACE, gt.image) for p in inst.neg_points),
            prompt_mode="box_2pt",
            image_ref=gt.image_ref,
        )
        pred_masks.append(rle_decode(seg.segment(req).mask))

    gt_union = mask_union(list(gt.gt_masks))
    comps["sam_iou"] = cfg.iou_weight * mask_iou(mask_union(pred_masks), gt_union)
    comps["neg_validity"] = cfg.neg_weight * _neg_validity_fraction(pr, gt, cfg, assignment)
    return _make_breakdown(comps, pr.format_faults)


def score_group(
    rollouts: list[str],
    gt: GroundTruth,
    cfg: RewardConfig,
    mode: str = "distance",
    seg: Segmenter | None = None,
) -> list[RewardBreakdown]:
    """Score each rollout independently, preserving order."""
    if mode not in REWARD_MODES:
        raise ValueError(f"mode must be one of {REWARD_MODES}, got {mode!r}")
    if mode == "sam_loop" and seg is None:
        raise ValueError("sam_loop scoring needs a segmenter")
    out = []
    for raw in rollouts:
        pr = parse_response(raw)
        if mode == "distance":
            out.append(distance_reward(pr, gt, cfg))
        else:
            out.append(sam_loop_reward(pr, gt, seg, cfg))
    return out
