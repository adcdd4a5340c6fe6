# backend/handlers/sensitivity/main.py
"""
sensitivity: analytic pitch/focal coefficients checked against central
finite differences of the full pipeline, on a detection file or on a
synthesized scene when no file is given.
"""
import logging
from pathlib import Path
from typing import Optional, Tuple

from handlers.common import as_float, as_int, common_parameters, failure, invalid, load_config, parameters, respond
from shared.detection_io import load_detections
from shared.errors import EXIT_INSUFFICIENT_ANCHORS, EXIT_OK
from shared.report import build_meta, build_report, write_report
from shared.sensitivity import DEFAULT_FOCAL_STEP_PX, DEFAULT_THETA_STEP_RAD, sensitivity_report
from shared.synth_oracle import DEFAULT_ALTITUDE_M, generate_scene, random_scene

logger = logging.getLogger(__name__)


def validate_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    result, error = common_parameters(params)
    if error:
        return None, error

    result["detections"] = params.get("detections")
    result["output"] = params.get("output")

    for key, default in (("theta_step", DEFAULT_THETA_STEP_RAD), ("focal_step", DEFAULT_FOCAL_STEP_PX),
                         ("altitude_m", DEFAULT_ALTITUDE_M)):
        value, error = as_float(params, key, default=default)
        if error:
            return None, error
        if not value > 0:
            return None, f"Invalid {key}: must be positive, got {value}"
        result[key] = value

    n_vehicles, error = as_int(params, "n_vehicles", default=20, minimum=1)
    if error:
        return None, error
    result["n_vehicles"] = n_vehicles

    sample_pixel = params.get("sample_pixel")
    if sample_pixel is not None:
        try:
            sample_pixel = (float(sample_pixel[0]), float(sample_pixel[1]))
        except (TypeError, ValueError, IndexError):
            return None, "sample_pixel must be a pixel pair [u, v]"
    result["sample_pixel"] = sample_pixel
    return result, None


def handler(event, context=None):
    """Run the pitch and focal finite-difference checks"""
    validated, error = validate_parameters(parameters(event))
    if error:
        return invalid(error)

    try:
        config, provenance = load_config(validated)
        estimator = config.estimator()

        if validated["detections"]:
            path = Path(validated["detections"])
            parsed = load_detections(path, categories=config.category_list, intrinsics=estimator.intrinsics)
            detections, source, parse_summary = parsed.detections, path.name, parsed.summary.to_dict()
        else:
            spec = random_scene(
                config.seed,
                n_vehicles=validated["n_vehicles"],
                altitude_m=validated["altitude_m"],
                pitch_deg=estimator.pose.pitch_deg,
                intrinsics=estimator.intrinsics,
                orthographic=config.orthophoto_mode,
            )
            detections = generate_scene(spec).detections
            source, parse_summary = f"synth:seed={config.seed}", None

        base = estimator.estimate(detections)
        sensitivity = sensitivity_report(
            estimator,
            detections,
            theta_step=validated["theta_step"],
            focal_step=validated["focal_step"],
            tolerance=config.fd_rel_tolerance,
            sample_pixel=validated["sample_pixel"],
            base=base,
        )
        meta = build_meta(estimator, source=source, provenance=provenance, parse_summary=parse_summary)
        report = build_report(base, meta, sensitivity=sensitivity)
        if validated.get("output"):
            write_report(report, validated["output"])
        return respond(EXIT_OK if sensitivity.applicable else EXIT_INSUFFICIENT_ANCHORS, report)

    except Exception as e:
        return failure(e, "sensitivity")
