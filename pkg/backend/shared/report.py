# backend/shared/report.py
"""
JSON report assembly.

Every report carries the same top-level keys:
meta, instances, aggregation, scale, crop_plan, sensitivity.
Sections that do not apply are null. Numbers are written at full precision.
"""

import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Union

from shared.errors import DetectionParseError
from shared.geometry_core import VehiclePrior, optical_axis_height
from shared.resolution_crop import CropPlan, MapGeoTransform, ScaleReport
from shared.scale_pipeline import EstimationResult, ScaleEstimator
from shared.sensitivity import SensitivityReport

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
TOP_LEVEL_KEYS = ("meta", "instances", "aggregation", "scale", "crop_plan", "sensitivity")


def instance_records(result: EstimationResult) -> list:
    records = []
    for inst, inlier in zip(result.instances, result.inlier_mask):
        det = inst.detection
        records.append(
            {
                "detection_index": inst.detection_index,
                "center": [det.center_u, det.center_v],
                "len_pix": det.len_pix,
                "wid_pix": det.wid_pix,
                "edge_dir": list(det.edge_dir),
                "confidence": det.confidence,
                "category": det.category,
                "alpha_deg": math.degrees(inst.geometry.alpha_rad),
                "gamma_deg": math.degrees(inst.geometry.gamma_rad),
                "l_eff_m": inst.dims.l_eff_m,
                "w_eff_m": inst.dims.w_eff_m,
                "s_len": inst.scale.s_len,
                "s_wid": inst.scale.s_wid,
                "s_fused": inst.scale.s_fused,
                "naive_s_fused": inst.naive.s_fused,
                "inlier": bool(inlier),
            }
        )
    return records


def prior_section(prior: VehiclePrior, provenance: Optional[Dict[str, str]] = None) -> dict:
    provenance = provenance or {}
    return {
        "length_m": prior.length_m,
        "width_m": prior.width_m,
        "height_m": prior.height_m,
        "source": {
            "length_m": provenance.get("vehicle_length_m", "default"),
            "width_m": provenance.get("vehicle_width_m", "default"),
            "height_m": provenance.get("vehicle_height_m", "default"),
        },
    }


def build_meta(
    estimator: ScaleEstimator,
    source: Optional[str] = None,
    provenance: Optional[Dict[str, str]] = None,
    parse_summary: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> dict:
    intr = estimator.intrinsics
    meta = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "source": source,
        "intrinsics": {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "image_width": intr.image_width,
            "image_height": intr.image_height,
            "focal_px": intr.focal_length,
        },
        "pitch_deg": estimator.pose.pitch_deg,
        "prior": prior_section(estimator.prior, provenance),
        "filter": {
            "conf_threshold": estimator.filter_config.conf_threshold,
            "min_count": estimator.filter_config.min_count,
        },
        "orthophoto_mode": estimator.planar,
        "height_term_disabled": estimator.prior.height_m == 0.0,
        "provenance": dict(provenance or {}),
        "parse": parse_summary,
        "discrepancies": {
            "optical_axis_height_m": optical_axis_height(estimator.prior, estimator.pose),
        },
    }
    if extra:
        meta.update(extra)
    return meta


def build_report(
    result: EstimationResult,
    meta: dict,
    crop_plan: Optional[CropPlan] = None,
    sensitivity: Optional[SensitivityReport] = None,
    transform: Optional[MapGeoTransform] = None,
) -> dict:
    return {
        "meta": meta,
        "instances": instance_records(result),
        "aggregation": None if result.aggregation is None else result.aggregation.to_dict(),
        "scale": result.report.to_dict(),
        "crop_plan": None if crop_plan is None else crop_plan.to_dict(transform),
        "sensitivity": None if sensitivity is None else sensitivity.to_dict(),
    }


def write_report(report: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, allow_nan=False), encoding="utf-8")
    logger.info(f"[REPORT] Wrote {path}")
    return path


def load_scale_report(path: Union[str, Path]) -> ScaleReport:
    """Read the scale section back from a written report"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except UnicodeDecodeError as e:
        raise DetectionParseError(f"report is not UTF-8 text (byte {e.start})", None, path.name) from e
    except json.JSONDecodeError as e:
        raise DetectionParseError(f"invalid report JSON: {e.msg}", e.lineno, path.name) from e
    section = payload.get("scale") if isinstance(payload, dict) else None
    if not isinstance(section, dict):
        raise DetectionParseError("report has no 'scale' section", None, path.name)
    return ScaleReport.from_dict(section)


def key_structure(report: dict) -> dict:
    """Nested key layout of a report, used to pin the schema"""
    instances = report.get("instances") or []
    return {
        "top_level": sorted(report.keys()),
        "meta": sorted(report["meta"].keys()),
        "instance": sorted(instances[0].keys()) if instances else [],
        "aggregation": sorted(report["aggregation"].keys()) if report.get("aggregation") else [],
        "scale": sorted(report["scale"].keys()),
    }
