"""Parse raw model completions into structured grounding predictions.

The grammar is a <think> block (optional) followed by an <answer> block whose
content is a JSON object, either ``{"no_target": true}`` or::

    {"instances": [{"bbox": [x1, y1, x2, y2],
                    "points": [[x, y], [x, y]],
                    "neg_points": [[x, y], ...]}, ...]}

All coordinates live in the normalized [0, 1000] space. Parsing never raises:
every failure is recorded as a fault code. Fatal faults (missing answer tag,
bad JSON, schema violations) null the prediction and clear ``format_ok``;
non-fatal faults (clamped out-of-range coordinates, extra answer blocks) are
recorded but keep the prediction usable so geometry, not formatting, prices
the mistake.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from .geometry import Box, Point2, normalize_box

__all__ = [
    "Instance",
    "GroundingPrediction",
    "ParsedResponse",
    "parse_response",
    "repetition_score",
    "has_nonempty_think",
    "FATAL_FAULTS",
]

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)

#: Faults that invalidate the response format entirely.
FATAL_FAULTS = frozenset(
    {
        "missing_answer_tag",
        "invalid_json",
        "schema_mismatch",
        "empty_instances",
        "wrong_point_count",
    }
)

_COORD_LO = 0.0
_COORD_HI = 1000.0


@dataclass(frozen=True)
class Instance:
    """One predicted instance: a box plus exactly two positive keypoints."""

    bbox: Box
    points: tuple[Point2, Point2]
    neg_points: tuple[Point2, ...] = ()


@dataclass(frozen=True)
class GroundingPrediction:
    """Either a no-target flag or a non-empty instance list, never both."""

    no_target: bool
    instances: tuple[Instance, ...] = ()

    def __post_init__(self):
        if self.no_target and self.instances:
            raise ValueError("no_target prediction cannot carry instances")
        if not self.no_target and not self.instances:
            raise ValueError("prediction needs at least one instance unless no_target")


@dataclass
class ParsedResponse:
    raw: str
    think_text: str | None
    prediction: GroundingPrediction | None
    format_ok: bool
    format_faults: list[str] = field(default_factory=list)


def _as_number(v) -> float | None:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        return None
    f = float(v)
    if not math.isfinite(f):
        return None
    return f


class _Faults:
    """Ordered, de-duplicated fault collector."""

    def __init__(self):
        self.codes: list[str] = []

    def add(self, code: str):
        if code not in self.codes:
            self.codes.append(code)

    def fatal(self) -> bool:
        return any(c in FATAL_FAULTS for c in self.codes)


def _clamp_coord(v: float, faults: _Faults) -> float:
    if v < _COORD_LO or v > _COORD_HI:
        faults.add("out_of_range_coordinate")
        return min(_COORD_HI, max(_COORD_LO, v))
    return v


def _parse_point(obj, faults: _Faults) -> Point2 | None:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        faults.add("schema_mismatch")
        return None
    x = _as_number(obj[0])
    y = _as_number(obj[1])
    if x is None or y is None:
        faults.add("schema_mismatch")
        return None
    return Point2(_clamp_coord(x, faults), _clamp_coord(y, faults))


def _parse_instance(obj, faults: _Faults) -> Instance | None:
    if not isinstance(obj, dict):
        faults.add("schema_mismatch")
        return None
    bbox_raw = obj.get("bbox")
    if not isinstance(bbox_raw, (list, tuple)) or len(bbox_raw) != 4:
        faults.add("schema_mismatch")
        return None
    coords = [_as_number(v) for v in bbox_raw]
    if any(c is None for c in coords):
        faults.add("schema_mismatch")
        return None
    coords = [_clamp_coord(c, faults) for c in coords]

    points_raw = obj.get("points")
    if not isinstance(points_raw, (list, tuple)):
        faults.add("schema_mismatch")
        return None
    if len(points_raw) != 2:
        faults.add("wrong_point_count")
        return None
    points = [_parse_point(p, faults) for p in points_raw]
    if any(p is None for p in points):
        return None

    neg_raw = obj.get("neg_points", [])
    if neg_raw is None:
        neg_raw = []
    if not isinstance(neg_raw, (list, tuple)):
        faults.add("schema_mismatch")
        return None
    if len(neg_raw) > 2:
        faults.add("wrong_point_count")
        return None
    neg_points = [_parse_point(p, faults) for p in neg_raw]
    if any(p is None for p in neg_points):
        return None

    return Instance(
        bbox=normalize_box(Box(*coords)),
        points=(points[0], points[1]),
        neg_points=tuple(neg_points),
    )


def _parse_answer_json(payload: str, faults: _Faults) -> GroundingPrediction | None:
    try:
        obj = json.loads(payload, parse_constant=_reject_constant)
    except ValueError:
        faults.add("invalid_json")
        return None
    if not isinstance(obj, dict):
        faults.add("schema_mismatch")
        return None

    if "no_target" in obj:
        if obj.get("no_target") is True and "instances" not in obj:
            return GroundingPrediction(no_target=True)
        faults.add("schema_mismatch")
        return None

    instances_raw = obj.get("instances")
    if not isinstance(instances_raw, list):
        faults.add("schema_mismatch")
        return None
    if not instances_raw:
        faults.add("empty_instances")
        return None
    instances = [_parse_instance(i, faults) for i in instances_raw]
    if any(i is None for i in instances):
        return None
    return GroundingPrediction(no_target=False, instances=tuple(instances))


def _reject_constant(name: str):
    # json.loads otherwise accepts NaN/Infinity literals
    raise ValueError(f"non-finite JSON constant {name!r}")


def parse_response(raw: str) -> ParsedResponse:
    """Total parser: any input yields a ParsedResponse, never an exception."""
    faults = _Faults()
    think_match = _THINK_RE.search(raw)
    think_text = think_match.group(1) if think_match else None

    answers = _ANSWER_RE.findall(raw)
    prediction = None
    if not answers:
        faults.add("missing_answer_tag")
    else:
        if len(answers) > 1:
            faults.add("multiple_answer_blocks")
        prediction = _parse_answer_json(answers[0].strip(), faults)

    format_ok = prediction is not None and not faults.fatal()
    return ParsedResponse(
        raw=raw,
        think_text=think_text,
        prediction=prediction,
        format_ok=format_ok,
        format_faults=faults.codes,
    )


def repetition_score(raw: str) -> float:
    """Fraction of overlapping word 4-grams that repeat an earlier 4-gram."""
    words = raw.split()
    if len(words) < 4:
        return 0.0
    total = len(words) - 3
    seen: set[tuple[str, ...]] = set()
    duplicates = 0
    for i in range(total):
        gram = tuple(words[i : i + 4])
        if gram in seen:
            duplicates += 1
        else:
            seen.add(gram)
    return duplicates / total


def has_nonempty_think(pr: ParsedResponse) -> bool:
    """True when a <think> block exists and holds non-whitespace text."""
    return pr.think_text is not None and bool(pr.think_text.strip())
