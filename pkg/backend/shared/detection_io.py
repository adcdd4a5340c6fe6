# backend/shared/detection_io.py
"""
Detection file readers and writers.

Formats:
- dota-obb: one box per line, "x1 y1 x2 y2 x3 y3 x4 y4 category score".
  Header lines ("imagesource:", "gsd:"), blank lines and "#" comments are skipped.
- json: an array of records {"corners", "category", "score"}; records may also
  carry the exact box fields (center, len_pix, wid_pix, edge_dir), which then
  take precedence over the corners.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from security import SecurityUtils
from shared.errors import DegenerateDetectionError, DetectionParseError
from shared.geometry_core import DEFAULT_CATEGORY, CameraIntrinsics, OrientedDetection

logger = logging.getLogger(__name__)

DOTA_FIELD_COUNT = 10
DOTA_HEADER_PREFIXES = ("imagesource:", "gsd:")


class DetectionFormat(str, Enum):
    DOTA = "dota-obb"
    JSON = "json"

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "DetectionFormat":
        return cls.JSON if Path(path).suffix.lower() == ".json" else cls.DOTA


@dataclass
class ParseSummary:
    n_records: int = 0
    n_parsed: int = 0
    dropped_category: int = 0
    dropped_out_of_bounds: int = 0
    dropped_degenerate: int = 0
    skipped_lines: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ParsedDetections:
    detections: List[OrientedDetection] = field(default_factory=list)
    summary: ParseSummary = field(default_factory=ParseSummary)
    source: Optional[str] = None
    format: DetectionFormat = DetectionFormat.DOTA

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)


def _normalize_categories(categories: Optional[Iterable[str]]):
    if categories is None:
        return None
    return {c.strip().lower() for c in categories if c and c.strip()}


def _to_float(token, what: str, line_number: int, source: Optional[str]) -> float:
    try:
        value = float(token)
    except (TypeError, ValueError):
        raise DetectionParseError(f"{what} is not a number: {SecurityUtils.sanitize_log_input(token)!r}",
                                  line_number, source)
    if not math.isfinite(value):
        raise DetectionParseError(f"{what} is not finite: {token!r}", line_number, source)
    return value


def _check_score(score: float, line_number: int, source: Optional[str]) -> float:
    if not (0.0 <= score <= 1.0):
        raise DetectionParseError(f"score {score} outside [0, 1]", line_number, source)
    return score


def _admit(
    result: ParsedDetections,
    build,
    category: str,
    allowed,
    intrinsics: Optional[CameraIntrinsics],
    line_number: int,
):
    """Apply the category gate, build the box and drop degenerate or off-image ones"""
    summary = result.summary
    if allowed is not None and category not in allowed:
        summary.dropped_category += 1
        return
    try:
        det = build()
    except DegenerateDetectionError as e:
        summary.dropped_degenerate += 1
        name = SecurityUtils.sanitize_log_input(result.source or "input")
        logger.warning(f"[PARSE] {name} record {line_number}: degenerate box dropped ({e})")
        return
    if intrinsics is not None and not intrinsics.contains(det.center_u, det.center_v):
        summary.dropped_out_of_bounds += 1
        logger.info(
            f"[PARSE] {SecurityUtils.sanitize_log_input(result.source or 'input')} record {line_number}: center "
            f"({det.center_u:.1f}, {det.center_v:.1f}) outside the image"
        )
        return
    result.detections.append(det)
    summary.n_parsed += 1


def parse_dota_obb(
    text: str,
    categories: Optional[Iterable[str]] = (DEFAULT_CATEGORY,),
    intrinsics: Optional[CameraIntrinsics] = None,
    source: Optional[str] = None,
) -> ParsedDetections:
    allowed = _normalize_categories(categories)
    result = ParsedDetections(source=source, format=DetectionFormat.DOTA)

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith(DOTA_HEADER_PREFIXES):
            result.summary.skipped_lines += 1
            continue
        fields = line.split()
        if len(fields) != DOTA_FIELD_COUNT:
            raise DetectionParseError(
                f"expected {DOTA_FIELD_COUNT} fields (8 coordinates, category, score), got {len(fields)}",
                line_number,
                source,
            )
        result.summary.n_records += 1
        coords = [_to_float(tok, f"coordinate {i + 1}", line_number, source) for i, tok in enumerate(fields[:8])]
        if not SecurityUtils.validate_category(fields[8]):
            raise DetectionParseError(
                f"invalid category {SecurityUtils.sanitize_log_input(fields[8])!r}", line_number, source
            )
        category = fields[8].lower()
        score = _check_score(_to_float(fields[9], "score", line_number, source), line_number, source)
        corners = [coords[i:i + 2] for i in range(0, 8, 2)]
        _admit(
            result,
            lambda: OrientedDetection.from_corners(corners, confidence=score, category=category),
            category,
            allowed,
            intrinsics,
            line_number,
        )

    logger.info(
        f"[PARSE] {SecurityUtils.sanitize_log_input(source or 'input')}: {result.summary.n_parsed} of "
        f"{result.summary.n_records} boxes kept"
    )
    return result


def _record_corners(record: dict, index: int, source: Optional[str]) -> List[List[float]]:
    corners = record.get("corners")
    if corners is None:
        raise DetectionParseError("missing 'corners'", index, source)
    flat = []
    try:
        for item in corners:
            if isinstance(item, (list, tuple)):
                flat.extend(item)
            else:
                flat.append(item)
    except TypeError:
        raise DetectionParseError("'corners' must be a list", index, source)
    if len(flat) != 8:
        raise DetectionParseError(f"'corners' must hold 8 coordinates, got {len(flat)}", index, source)
    values = [_to_float(v, f"coordinate {i + 1}", index, source) for i, v in enumerate(flat)]
    return [values[i:i + 2] for i in range(0, 8, 2)]


def _exact_builder(record: dict, score: float, category: str, index: int, source: Optional[str]):
    center = record["center"]
    edge = record["edge_dir"]
    if len(center) != 2 or len(edge) != 2:
        raise DetectionParseError("'center' and 'edge_dir' must be 2-vectors", index, source)
    u = _to_float(center[0], "center u", index, source)
    v = _to_float(center[1], "center v", index, source)
    len_pix = _to_float(record["len_pix"], "len_pix", index, source)
    wid_pix = _to_float(record["wid_pix"], "wid_pix", index, source)
    ex = _to_float(edge[0], "edge_dir x", index, source)
    ey = _to_float(edge[1], "edge_dir y", index, source)
    return lambda: OrientedDetection(u, v, len_pix, wid_pix, (ex, ey), score, category)


def parse_detection_json(
    text: str,
    categories: Optional[Iterable[str]] = (DEFAULT_CATEGORY,),
    intrinsics: Optional[CameraIntrinsics] = None,
    source: Optional[str] = None,
) -> ParsedDetections:
    """Parse a JSON detection array (or an object with a 'detections' array)"""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise DetectionParseError(f"invalid JSON: {e.msg}", e.lineno, source) from e
    if isinstance(payload, dict):
        payload = payload.get("detections")
    if not isinstance(payload, list):
        raise DetectionParseError("expected a JSON array of detection records", None, source)

    allowed = _normalize_categories(categories)
    result = ParsedDetections(source=source, format=DetectionFormat.JSON)
    exact_keys = ("center", "len_pix", "wid_pix", "edge_dir")

    for index, record in enumerate(payload, start=1):
        if not isinstance(record, dict):
            raise DetectionParseError("record is not an object", index, source)
        result.summary.n_records += 1
        category = str(record.get("category", DEFAULT_CATEGORY)).lower()
        if not SecurityUtils.validate_category(category):
            raise DetectionParseError(
                f"invalid category {SecurityUtils.sanitize_log_input(category)!r}", index, source
            )
        score = _check_score(_to_float(record.get("score", 1.0), "score", index, source), index, source)

        if all(key in record for key in exact_keys):
            try:
                build = _exact_builder(record, score, category, index, source)
            except TypeError as e:
                raise DetectionParseError(f"malformed exact box fields: {e}", index, source) from e
        else:
            corners = _record_corners(record, index, source)
            build = (lambda c=corners: OrientedDetection.from_corners(c, confidence=score, category=category))
        _admit(result, build, category, allowed, intrinsics, index)

    logger.info(
        f"[PARSE] {SecurityUtils.sanitize_log_input(source or 'input')}: {result.summary.n_parsed} of "
        f"{result.summary.n_records} records kept"
    )
    return result


def load_detections(
    path: Union[str, Path],
    fmt: Optional[Union[str, DetectionFormat]] = None,
    categories: Optional[Iterable[str]] = (DEFAULT_CATEGORY,),
    intrinsics: Optional[CameraIntrinsics] = None,
) -> ParsedDetections:
    """Read a detection file; the format follows the suffix unless given"""
    path = Path(path)
    fmt = DetectionFormat(fmt) if fmt is not None else DetectionFormat.from_path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DetectionParseError(f"not UTF-8 text (byte {e.start})", None, path.name) from e
    parser = parse_detection_json if fmt == DetectionFormat.JSON else parse_dota_obb
    return parser(text, categories=categories, intrinsics=intrinsics, source=path.name)


def detection_to_record(det: OrientedDetection) -> dict:
    return {
        "corners": det.corners().tolist(),
        "category": det.category,
        "score": det.confidence,
        "center": [det.center_u, det.center_v],
        "len_pix": det.len_pix,
        "wid_pix": det.wid_pix,
        "edge_dir": list(det.edge_dir),
    }


def dump_detections_json(dets: Sequence[OrientedDetection]) -> str:
    return json.dumps([detection_to_record(d) for d in dets], indent=2, allow_nan=False)


def format_dota_obb(dets: Sequence[OrientedDetection]) -> str:
    lines = []
    for det in dets:
        coords = " ".join(repr(float(c)) for c in det.corners().ravel())
        lines.append(f"{coords} {det.category} {det.confidence!r}")
    return "\n".join(lines) + ("\n" if lines else "")
