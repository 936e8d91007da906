"""Evaluation metric suite: cIoU, mIoU, P@tau, scoreless box AP, no-target rates.

cIoU is sum(intersections) / sum(unions) over a dataset, weighting samples by
object area; mIoU is the unweighted mean of per-sample IoU; P@tau is the
fraction of samples with IoU >= tau. No-target samples are excluded from the
target mask metrics and aggregated separately as abstention accuracy and
false-negative rate.

The pipeline emits no confidence scores, so the PR curve per AP threshold
degenerates to a single point; AP at threshold t is defined here as
precision_t * recall_t (the area under that one-point step curve) and the
overall AP averages t in {0.50, 0.55, ..., 0.95}. This reduction is exact for
perfect predictions and documented as non-comparable to score-ranked COCO AP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import AlignmentError, ConsistencyError, EmptyEvaluation
from .geometry import Box, box_iou

__all__ = [
    "SampleEvaluation",
    "MetricReport",
    "ciou",
    "miou",
    "precision_at",
    "box_ap",
    "no_target_metrics",
    "build_report",
    "AP_THRESHOLDS",
]

AP_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))

P_AT_TAUS = (0.5, 0.7, 0.9)


@dataclass(frozen=True)
class SampleEvaluation:
    """Pixel intersection/union bookkeeping for one evaluated sample."""

    sample_id: str
    intersection: int
    union: int
    is_no_target_gt: bool = False
    predicted_no_target: bool = False
    box_iou_best: float | None = None

    def __post_init__(self):
        if self.intersection < 0 or self.union < self.intersection:
            raise ConsistencyError(
                f"{self.sample_id}: intersection {self.intersection} / union {self.union} impossible"
            )
        if self.is_no_target_gt and self.intersection != 0:
            raise ConsistencyError(f"{self.sample_id}: no-target ground truth cannot intersect")

    @property
    def iou(self) -> float:
        """intersection/union; vacuous 1.0 when both masks are empty."""
        if self.union == 0:
            return 1.0
        return self.intersection / self.union


def ciou(samples: Sequence[SampleEvaluation]) -> float:
    """Cumulative IoU: area-weighted, sum of intersections over sum of unions."""
    if not samples:
        raise EmptyEvaluation("ciou over zero samples")
    total_i = sum(s.intersection for s in samples)
    total_u = sum(s.union for s in samples)
    if total_u == 0:
        return 0.0
    return total_i / total_u


def miou(samples: Sequence[SampleEvaluation]) -> float:
    """Unweighted mean of per-sample IoU."""
    if not samples:
        raise EmptyEvaluation("miou over zero samples")
    return sum(s.iou for s in samples) / len(samples)


def precision_at(samples: Sequence[SampleEvaluation], tau: float) -> float:
    """Fraction of samples with IoU >= tau (inclusive boundary)."""
    if not samples:
        raise EmptyEvaluation("precision_at over zero samples")
    return sum(1 for s in samples if s.iou >= tau) / len(samples)


def _greedy_matches(pred: Sequence[Box], gt: Sequence[Box], threshold: float) -> int:
    """One-to-one greedy matching, highest IoU first, within one sample."""
    pairs = []
    for pi, p in enumerate(pred):
        for gi, g in enumerate(gt):
            iou = box_iou(p, g)
            if iou >= threshold:
                pairs.append((-iou, pi, gi))
    pairs.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = 0
    for _, pi, gi in pairs:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        matches += 1
    return matches


def box_ap(
    preds: Mapping[str, Sequence[Box]], gts: Mapping[str, Sequence[Box]]
) -> tuple[float, float, float]:
    """Scoreless AP family (ap, ap50, ap75) over id-aligned box sets."""
    if set(preds) != set(gts):
        missing = set(gts) ^ set(preds)
        raise AlignmentError(f"box AP ids differ, e.g. {sorted(missing)[:5]}")
    total_pred = sum(len(v) for v in preds.values())
    total_gt = sum(len(v) for v in gts.values())

    ap_by_t = {}
    for t in AP_THRESHOLDS:
        tp = sum(_greedy_matches(preds[sid], gts[sid], t) for sid in preds)
        if total_pred == 0 or total_gt == 0:
            ap_by_t[t] = 0.0
            continue
        precision = tp / total_pred
        recall = tp / total_gt
        ap_by_t[t] = precision * recall
    ap = sum(ap_by_t.values()) / len(AP_THRESHOLDS)
    return ap, ap_by_t[0.5], ap_by_t[0.75]


def no_target_metrics(
    samples: Sequence[SampleEvaluation],
) -> tuple[float | None, float | None]:
    """(no-target accuracy, false-negative rate); None for an empty split."""
    negatives = [s for s in samples if s.is_no_target_gt]
    targets = [s for s in samples if not s.is_no_target_gt]
    acc = None
    if negatives:
        acc = sum(1 for s in negatives if s.predicted_no_target) / len(negatives)
    fnr = None
    if targets:
        fnr = sum(1 for s in targets if s.predicted_no_target) / len(targets)
    return acc, fnr


@dataclass(frozen=True)
class MetricReport:
    ciou: float
    miou: float
    p_at: dict[float, float]
    n_samples: int
    n_target: int
    n_no_target: int
    ap: float | None = None
    ap50: float | None = None
    ap75: float | None = None
    no_target_acc: float | None = None
    false_negative_rate: float | None = None

    def __post_init__(self):
        if not (self.p_at[0.9] <= self.p_at[0.7] + 1e-12 and self.p_at[0.7] <= self.p_at[0.5] + 1e-12):
            raise ConsistencyError(f"precision must fall as tau rises: {self.p_at}")
        rates = [self.ciou, self.miou, *self.p_at.values(), self.no_target_acc, self.false_negative_rate]
        for value in rates:
            if value is not None and not (0.0 <= value <= 1.0):
                raise ConsistencyError(f"rate {value} outside [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "ciou": self.ciou,
            "miou": self.miou,
            "p50": self.p_at[0.5],
            "p70": self.p_at[0.7],
            "p90": self.p_at[0.9],
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "no_target_acc": self.no_target_acc,
            "fnr": self.false_negative_rate,
            "n_samples": self.n_samples,
            "n_target": self.n_target,
            "n_no_target": self.n_no_target,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        """Header plus one value row, tab-separated, for spreadsheet ingestion."""
        names = ["ciou", "miou", "p50", "p70", "p90", "ap", "ap50", "ap75", "no_target_acc", "fnr"]
        d = self.to_json_dict()
        values = ["" if d[n] is None else repr(d[n]) for n in names]
        return "\t".join(names) + "\n" + "\t".join(values) + "\n"


def build_report(
    samples: Sequence[SampleEvaluation],
    box_preds: Mapping[str, Sequence[Box]] | None = None,
    box_gts: Mapping[str, Sequence[Box]] | None = None,
    include_no_target: bool = False,
) -> MetricReport:
    """Aggregate per-sample evaluations into the full metric suite.

    Mask metrics (ciou/miou/P@tau) run over target samples only unless
    include_no_target is set, in which case abstentions count 1.0 and
    hallucinations 0.0 in the same aggregate.
    """
    if not samples:
        raise EmptyEvaluation("report over zero samples")
    targets = [s for s in samples if not s.is_no_target_gt]
    mask_samples = list(samples) if include_no_target else targets
    if not mask_samples:
        raise EmptyEvaluation("report needs at least one target sample")

    ap = ap50 = ap75 = None
    if box_preds is not None and box_gts is not None:
        ap, ap50, ap75 = box_ap(box_preds, box_gts)

    acc, fnr = no_target_metrics(samples)
    return MetricReport(
        ciou=ciou(mask_samples),
        miou=miou(mask_samples),
        p_at={tau: precision_at(mask_samples, tau) for tau in P_AT_TAUS},
        n_samples=len(samples),
        n_target=len(targets),
        n_no_target=len(samples) - len(targets),
        ap=ap,
        ap50=ap50,
        ap75=ap75,
        no_target_acc=acc,
        false_negative_rate=fnr,
    )
