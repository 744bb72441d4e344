"""Ground selected attribute phrases on precomputed detector boxes.

The detections file is a JSON object mapping image id to a list of records
``{"box": [x1, y1, x2, y2], "object": str, "attribute": str, "score": float}``.
A phrase is grounded when some box's attribute phrase equals it after
normalization; there is no fuzzy matching.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

_WS = re.compile(r"\s+")


class DetectionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]
    object_phrase: str
    attribute_phrase: str
    score: float = 1.0

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")
        if not self.object_phrase.strip() or not self.attribute_phrase.strip():
            raise ValueError("phrases must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_json(self) -> dict:
        return {"box": list(self.box), "object": self.object_phrase,
                "attribute": self.attribute_phrase, "score": self.score}


@dataclass(frozen=True)
class GroundingResult:
    attribute_phrase: str
    boxes: tuple[Detection, ...]

    @property
    def grounded(self) -> bool:
        return bool(self.boxes)

    def to_json(self) -> dict:
        return {"attribute": self.attribute_phrase, "grounded": self.grounded,
                "boxes": [d.to_json() for d in self.boxes]}


def normalize_phrase(s: str) -> str:
    return _WS.sub(" ", s.strip().lower())


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise DetectionFormatError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _string(v, where: str) -> str:
    if not isinstance(v, str):
        raise DetectionFormatError(f"{where}: expected a string, got {v!r}")
    return v


def _parse_record(rec, where: str) -> Detection:
    if not isinstance(rec, dict):
        raise DetectionFormatError(f"{where}: record must be an object")
    for key in ("box", "object", "attribute"):
        if key not in rec:
            raise DetectionFormatError(f"{where}: missing field {key!r}")
    box = rec["box"]
    if not isinstance(box, list) or len(box) != 4:
        raise DetectionFormatError(f"{where}: field 'box' must be [x1, y1, x2, y2]")
    box = tuple(_number(v, f"{where} box") for v in box)
    score = _number(rec.get("score", 1.0), f"{where} score")
    return Detection(box, _string(rec["object"], f"{where} object"),
                     _string(rec["attribute"], f"{where} attribute"), score)


def parse_detections(doc, source: str = "<detections>"):
    """Validate a decoded detections document; returns ``(by_image, rejected)``.

    Structural problems raise :class:`DetectionFormatError`; records that parse
    but violate a box/phrase/score invariant are dropped and counted.
    """
    if not isinstance(doc, dict):
        raise DetectionFormatError(f"{source}: top level must map image id to records")
    out: dict[str, list[Detection]] = {}
    rejected = 0
    for image_id, records in doc.items():
        if not isinstance(records, list):
            raise DetectionFormatError(f"{source}: image {image_id!r} must map to a list")
        kept = []
        for j, rec in enumerate(records):
            where = f"{source}: image {image_id!r} record {j}"
            try:
                kept.append(_parse_record(rec, where))
            except DetectionFormatError:
                raise
            except ValueError as e:
                rejected += 1
                log.warning("%s rejected: %s", where, e)
        out[image_id] = kept
    return out, rejected


def load_detections(path):
    """Read a detections file; returns ``(by_image, rejected_count)``."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DetectionFormatError(
            f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from None
    return parse_detections(doc, str(path))


def ground(selected_phrases, detections, min_score: float = 0.0) -> list[GroundingResult]:
    """One result per phrase, in input order; boxes keep detection order."""
    keyed = [(normalize_phrase(d.attribute_phrase), d) for d in detections if d.score >= min_score]
    results = []
    for phrase in selected_phrases:
        target = normalize_phrase(phrase)
        results.append(GroundingResult(phrase, tuple(d for key, d in keyed if key == target)))
    return results
