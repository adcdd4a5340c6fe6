# backend/handlers/plan_crops/main.py
"""
plan-crops: scale report + satellite map description -> crop plan.

The report is the JSON written by `estimate`; only its scale section is read.
"""
import logging
from typing import Optional, Tuple

from handlers.common import as_float, as_int, common_parameters, failure, invalid, load_config, ok, parameters
from shared.errors import CropPlanningError
from shared.evaluation import mismatch_crop_table
from shared.report import load_scale_report, write_report
from shared.resolution_crop import MapBounds, MapGeoTransform, fov_radius, plan_crops, search_bounds

logger = logging.getLogger(__name__)


def validate_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    result, error = common_parameters(params)
    if error:
        return None, error

    if not params.get("report"):
        return None, "report parameter is required (JSON written by estimate)"
    result["report"] = str(params["report"])
    result["output"] = params.get("output")

    for key in ("map_width", "map_height"):
        value, error = as_int(params, key, minimum=1)
        if error:
            return None, error
        if value is None:
            return None, f"{key} parameter is required"
        result[key] = value
    for key in ("map_x", "map_y"):
        value, error = as_int(params, key, default=0, minimum=0)
        if error:
            return None, error
        result[key] = value

    for key in ("gsd_sat", "uav_width_px", "origin_x_m", "origin_y_m", "search_radius_m"):
        value, error = as_float(params, key)
        if error:
            return None, error
        result[key] = value

    center = params.get("search_center_px")
    if center is not None:
        try:
            center = (float(center[0]), float(center[1]))
        except (TypeError, ValueError, IndexError):
            return None, "search_center_px must be a pair of numbers"
        if result["search_radius_m"] is None:
            return None, "search_center_px needs search_radius_m"
    result["search_center_px"] = center

    origin = (result["origin_x_m"], result["origin_y_m"])
    if (origin[0] is None) != (origin[1] is None):
        return None, "origin_x_m and origin_y_m must be given together"

    deltas = params.get("mismatch_deltas") or []
    try:
        result["mismatch_deltas"] = [float(d) for d in deltas]
    except (TypeError, ValueError):
        return None, "mismatch_deltas must be a list of numbers"
    return result, None


def handler(event, context=None):
    """Plan scale-consistent satellite crops for an estimated image"""
    validated, error = validate_parameters(parameters(event))
    if error:
        return invalid(error)

    try:
        config, _ = load_config(validated)
        gsd_sat = validated["gsd_sat"] if validated["gsd_sat"] is not None else config.gsd_sat
        if gsd_sat is None:
            raise CropPlanningError("Satellite GSD is required (gsd_sat parameter or config)")
        uav_width = validated["uav_width_px"] or float(config.image_width)

        report = load_scale_report(validated["report"])
        bounds = MapBounds(validated["map_x"], validated["map_y"], validated["map_width"], validated["map_height"])
        if validated["search_center_px"] is not None:
            bounds = search_bounds(validated["search_center_px"], validated["search_radius_m"], gsd_sat, bounds)

        transform = None
        if validated["origin_x_m"] is not None:
            transform = MapGeoTransform(validated["origin_x_m"], validated["origin_y_m"], gsd_sat)

        plan = plan_crops(report, uav_width, bounds, gsd_sat)
        body = {
            "scale": report.to_dict(),
            "gsd_ratio": report.gsd_ratio(gsd_sat),
            "fov_radius_m": fov_radius(report, uav_width),
            "crop_plan": plan.to_dict(transform),
            "mismatch": None,
        }
        if validated["mismatch_deltas"]:
            table = mismatch_crop_table(report, uav_width, gsd_sat, validated["mismatch_deltas"])
            body["mismatch"] = table.astype(object).where(table.notna(), None).to_dict(orient="records")

        if validated.get("output"):
            write_report(body, validated["output"])
        return ok(body)

    except Exception as e:
        return failure(e, "plan_crops")
