"""Annotation and prediction file ingestion, ground-truth materialization,
scene-store construction for the stub segmenter, and train/val overlap
analysis.

Canonical annotation format is JSONL, one record per line, all geometry in
pixel coordinates::

    {"sample_id": str, "image_id": str, "image_size": [h, w],
     "expression": str,
     "polygons": [ring | [ring, ...], ...],   # ring = [x1, y1, x2, y2, ...]
     "boxes": [[x1, y1, x2, y2], ...],
     "pos_points": [[[x, y], [x, y]], ...] | null,
     "neg_points": [[[x, y], ...], ...] | null,
     "no_target": bool}

Each polygons entry belongs to one instance (1:1 with boxes) and may be a
single flat ring or a list of rings for multi-part instances. Predictions are
JSONL ``{"sample_id": str, "response": str}``; train-image ids are plain
text, one per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AlignmentError, ConsistencyError, DuplicateSample, ParseError
from .geometry import NORMALIZED_SPACE, Box, CoordSpace, Point2, normalize_box, rescale_box, rescale_point
from .mask import Polygon, rasterize
from .metrics import MetricReport, SampleEvaluation, build_report
from .rewards import GroundTruth
from .segmenter import SceneObject, SceneStore, SyntheticScene

__all__ = [
    "AnnotationRecord",
    "PredictionRecord",
    "OverlapReport",
    "load_annotations",
    "save_annotations",
    "load_predictions",
    "load_train_ids",
    "to_ground_truth",
    "build_scene_store",
    "overlap_analysis",
    "import_coco",
    "evaluations_to_jsonl",
    "save_evaluations",
    "load_evaluations",
]


@dataclass(frozen=True)
class AnnotationRecord:
    sample_id: str
    image_id: str
    image_size: CoordSpace
    expression: str
    polygons: tuple[tuple[Polygon, ...], ...]  # one entry of rings per instance
    boxes_px: tuple[Box, ...]
    pos_points_px: tuple[tuple[Point2, Point2], ...] | None
    neg_points_px: tuple[tuple[Point2, ...], ...] | None
    is_no_target: bool

    def __post_init__(self):
        empty = not self.polygons and not self.boxes_px
        if self.is_no_target != empty:
            raise ConsistencyError(
                f"{self.sample_id}: no_target={self.is_no_target} but "
                f"{len(self.boxes_px)} boxes / {len(self.polygons)} polygon groups"
            )
        if self.polygons and len(self.polygons) != len(self.boxes_px):
            raise ConsistencyError(
                f"{self.sample_id}: {len(self.polygons)} polygon groups vs {len(self.boxes_px)} boxes"
            )
        for pts, label in ((self.pos_points_px, "pos_points"), (self.neg_points_px, "neg_points")):
            if pts is not None and len(pts) != len(self.boxes_px):
                raise ConsistencyError(f"{self.sample_id}: {label} not aligned with boxes")


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    raw_response: str

    def __post_init__(self):
        if not self.sample_id:
            raise ConsistencyError("prediction with empty sample_id")


def _parse_polygons_entry(entry, where: str) -> tuple[Polygon, ...]:
    if not isinstance(entry, list) or not entry:
        raise ParseError(f"{where}: polygons entry must be a non-empty list")
    if isinstance(entry[0], (int, float)):
        rings = [entry]
    else:
        rings = entry
    return tuple(Polygon(tuple(float(v) for v in ring)) for ring in rings)


def _record_from_obj(obj: dict, where: str) -> AnnotationRecord:
    try:
        h, w = obj["image_size"]
        boxes = tuple(normalize_box(Box(*(float(v) for v in b))) for b in obj["boxes"])
        polygons = tuple(_parse_polygons_entry(e, where) for e in obj["polygons"])
        pos_raw = obj.get("pos_points")
        pos = None
        if pos_raw is not None:
            pos = []
            for pair in pos_raw:
                if len(pair) != 2:
                    raise ParseError(f"{where}: pos_points entries need exactly two points")
                pos.append(tuple(Point2(float(x), float(y)) for x, y in pair))
            pos = tuple(pos)
        neg_raw = obj.get("neg_points")
        neg = None
        if neg_raw is not None:
            neg = tuple(tuple(Point2(float(x), float(y)) for x, y in entry) for entry in neg_raw)
        return AnnotationRecord(
            sample_id=str(obj["sample_id"]),
            image_id=str(obj["image_id"]),
            image_size=CoordSpace(int(w), int(h)),
            expression=str(obj["expression"]),
            polygons=polygons,
            boxes_px=boxes,
            pos_points_px=pos,
            neg_points_px=neg,
            is_no_target=bool(obj["no_target"]),
        )
    except ParseError:
        raise
    except ConsistencyError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read and validate annotation JSONL; duplicate sample ids are fatal."""
    records = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: {exc}") from exc
            rec = _record_from_obj(obj, where)
            if rec.sample_id in seen:
                raise DuplicateSample(f"{where}: duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            records.append(rec)
    return records


def _record_to_obj(rec: AnnotationRecord) -> dict:
    def points_out(groups):
        if groups is None:
            return None
        return [[[p.x, p.y] for p in group] for group in groups]

    polygons = []
    for rings in rec.polygons:
        if len(rings) == 1:
            polygons.append(list(rings[0].vertices))
        else:
            polygons.append([list(r.vertices) for r in rings])
    return {
        "sample_id": rec.sample_id,
        "image_id": rec.image_id,
        "image_size": [rec.image_size.height, rec.image_size.width],
        "expression": rec.expression,
        "polygons": polygons,
        "boxes": [list(b.as_tuple()) for b in rec.boxes_px],
        "pos_points": points_out(rec.pos_points_px),
        "neg_points": points_out(rec.neg_points_px),
        "no_target": rec.is_no_target,
    }


def save_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_obj(rec), sort_keys=True) + "\n")


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
                rec = PredictionRecord(sample_id=str(obj["sample_id"]), raw_response=str(obj["response"]))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: {exc}") from exc
            except (KeyError, TypeError) as exc:
                raise ParseError(f"{where}: {exc}") from exc
            if rec.sample_id in seen:
                raise DuplicateSample(f"{where}: duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            records.append(rec)
    return records


def load_train_ids(path: str | Path) -> set[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}


def to_ground_truth(rec: AnnotationRecord, with_masks: bool = True) -> GroundTruth:
    """Materialize a record: rasterize polygons, rescale pixel geometry to [0,1000]."""
    if rec.is_no_target:
        return GroundTruth(image=rec.image_size, is_no_target=True, image_ref=rec.image_id)
    boxes = tuple(rescale_box(b, rec.image_size, NORMALIZED_SPACE) for b in rec.boxes_px)
    points = None
    if rec.pos_points_px is not None:
        points = tuple(
            tuple(rescale_point(p, rec.image_size, NORMALIZED_SPACE) for p in pair)
            for pair in rec.pos_points_px
        )
    masks = ()
    if with_masks:
        masks = tuple(rasterize(list(rings), rec.image_size) for rings in rec.polygons)
    return GroundTruth(
        image=rec.image_size,
        gt_boxes=boxes,
        gt_masks=masks,
        gt_points=points,
        is_no_target=False,
        image_ref=rec.image_id,
    )


def build_scene_store(records: Sequence[AnnotationRecord]) -> SceneStore:
    """One scene per image holding every annotated instance mask, in record order."""
    spaces: dict[str, CoordSpace] = {}
    objects: dict[str, list[SceneObject]] = {}
    for rec in records:
        if rec.image_id in spaces:
            if spaces[rec.image_id] != rec.image_size:
                raise ConsistencyError(f"image {rec.image_id!r} has conflicting sizes")
        else:
            spaces[rec.image_id] = rec.image_size
            objects[rec.image_id] = []
        for rings in rec.polygons:
            objects[rec.image_id].append(SceneObject(rasterize(list(rings), rec.image_size)))
    return SceneStore(
        {img: SyntheticScene(space=spaces[img], objects=tuple(objects[img])) for img in spaces}
    )


# ---------------------------------------------------------------------------
# per-sample evaluation files (produced by eval, consumed by overlap)


def evaluations_to_jsonl(evals: Iterable[SampleEvaluation]) -> str:
    lines = []
    for e in evals:
        lines.append(
            json.dumps(
                {
                    "sample_id": e.sample_id,
                    "intersection": e.intersection,
                    "union": e.union,
                    "iou": e.iou,
                    "is_no_target_gt": e.is_no_target_gt,
                    "predicted_no_target": e.predicted_no_target,
                    "box_iou_best": e.box_iou_best,
                },
                sort_keys=True,
            )
        )
    return "".join(line + "\n" for line in lines)


def save_evaluations(evals: Iterable[SampleEvaluation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(evaluations_to_jsonl(evals))


def load_evaluations(path: str | Path) -> list[SampleEvaluation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(
                    SampleEvaluation(
                        sample_id=str(obj["sample_id"]),
                        intersection=int(obj["intersection"]),
                        union=int(obj["union"]),
                        is_no_target_gt=bool(obj["is_no_target_gt"]),
                        predicted_no_target=bool(obj["predicted_no_target"]),
                        box_iou_best=None if obj.get("box_iou_best") is None else float(obj["box_iou_best"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# overlap analysis


@dataclass(frozen=True)
class OverlapReport:
    n_val_images: int
    n_overlap_images: int
    pct_overlap: float
    n_verbatim_expressions: int
    clean_refs: int
    overlap_refs: int
    clean_report: MetricReport | None
    overlap_report: MetricReport | None
    full_report: MetricReport
    clean_sums: tuple[int, int]
    overlap_sums: tuple[int, int]
    full_sums: tuple[int, int]

    def to_json_dict(self) -> dict:
        return {
            "n_val_images": self.n_val_images,
            "n_overlap_images": self.n_overlap_images,
            "pct_overlap": self.pct_overlap,
            "n_verbatim_expressions": self.n_verbatim_expressions,
            "clean_refs": self.clean_refs,
            "overlap_refs": self.overlap_refs,
            "clean_report": None if self.clean_report is None else self.clean_report.to_json_dict(),
            "overlap_report": None if self.overlap_report is None else self.overlap_report.to_json_dict(),
            "full_report": self.full_report.to_json_dict(),
            "clean_sums": list(self.clean_sums),
            "overlap_sums": list(self.overlap_sums),
            "full_sums": list(self.full_sums),
        }


def _sums(evals: Sequence[SampleEvaluation]) -> tuple[int, int]:
    return (sum(e.intersection for e in evals), sum(e.union for e in evals))


def overlap_analysis(
    train_image_ids: set[str],
    val_records: Sequence[AnnotationRecord],
    val_evals: Sequence[SampleEvaluation],
    train_expressions: set[str] | None = None,
) -> OverlapReport:
    """Split validation refs by train-image overlap and compare metric suites.

    Verbatim expression matching is trimmed, lowercased exact equality; it
    needs the train expressions, which the train-id list does not carry, so
    the count is 0 when train_expressions is not given.
    """
    eval_by_id = {e.sample_id: e for e in val_evals}
    record_ids = {r.sample_id for r in val_records}
    if set(eval_by_id) != record_ids or len(val_evals) != len(record_ids):
        diff = sorted(set(eval_by_id) ^ record_ids)[:5]
        raise AlignmentError(f"evaluations do not align with records, e.g. {diff}")

    val_images = {r.image_id for r in val_records}
    shared = val_images & train_image_ids
    overlap_recs = [r for r in val_records if r.image_id in train_image_ids]
    clean_recs = [r for r in val_records if r.image_id not in train_image_ids]
    overlap_evals = [eval_by_id[r.sample_id] for r in overlap_recs]
    clean_evals = [eval_by_id[r.sample_id] for r in clean_recs]

    verbatim = 0
    if train_expressions is not None:
        normalized_train = {e.strip().lower() for e in train_expressions}
        verbatim = sum(1 for r in val_records if r.expression.strip().lower() in normalized_train)

    def subset_report(evals):
        if not evals or all(e.is_no_target_gt for e in evals):
            return None
        return build_report(evals)

    return OverlapReport(
        n_val_images=len(val_images),
        n_overlap_images=len(shared),
        pct_overlap=100.0 * len(shared) / len(val_images) if val_images else 0.0,
        n_verbatim_expressions=verbatim,
        clean_refs=len(clean_recs),
        overlap_refs=len(overlap_recs),
        clean_report=subset_report(clean_evals),
        overlap_report=subset_report(overlap_evals),
        full_report=build_report(list(val_evals)),
        clean_sums=_sums(clean_evals),
        overlap_sums=_sums(overlap_evals),
        full_sums=_sums(list(val_evals)),
    )


# ---------------------------------------------------------------------------
# COCO-style importer


def import_coco(path: str | Path) -> list[AnnotationRecord]:
    """Convert a COCO-style instances JSON into annotation records.

    One record per annotation; the expression falls back to the category name
    when no caption is present. Crowd RLE segmentations are rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    try:
        images = {img["id"]: img for img in blob["images"]}
        categories = {c["id"]: c.get("name", "") for c in blob.get("categories", [])}
        annotations = blob["annotations"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing COCO section: {exc}") from exc

    records = []
    for ann in annotations:
        where = f"{path}: annotation {ann.get('id')}"
        seg = ann.get("segmentation")
        if isinstance(seg, dict):
            raise ParseError(f"{where}: crowd RLE segmentation not supported")
        if not seg:
            raise ParseError(f"{where}: empty segmentation")
        img = images.get(ann.get("image_id"))
        if img is None:
            raise ParseError(f"{where}: unknown image_id {ann.get('image_id')!r}")
        try:
            x, y, w, h = (float(v) for v in ann["bbox"])
            rings = tuple(Polygon(tuple(float(v) for v in ring)) for ring in seg)
            expression = ann.get("expression") or ann.get("caption") or categories.get(ann.get("category_id"), "")
            records.append(
                AnnotationRecord(
                    sample_id=str(ann["id"]),
                    image_id=str(ann["image_id"]),
                    image_size=CoordSpace(int(img["width"]), int(img["height"])),
                    expression=str(expression),
                    polygons=(rings,),
                    boxes_px=(normalize_box(Box(x, y, x + w, y + h)),),
                    pos_points_px=None,
                    neg_points_px=None,
                    is_no_target=False,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: {exc}") from exc
    return records
