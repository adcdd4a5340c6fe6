# backend/handlers/synth/main.py
"""
synth: write oracle detection files with a "<stem>.truth.json" sidecar each.

Scenes are seeded seed, seed + 1, ... so a batch is reproducible from its
first seed and count.
"""
import json
import logging
from pathlib import Path
from typing import Optional, Tuple

from handlers.common import as_float, as_int, common_parameters, failure, invalid, load_config, ok, parameters
from security import SecurityUtils
from shared.detection_io import DetectionFormat, dump_detections_json, format_dota_obb
from shared.synth_oracle import DEFAULT_ALTITUDE_M, SyntheticScene, generate_batch
from shared.utils import scene_stem, truth_sidecar_path

logger = logging.getLogger(__name__)

SUFFIXES = {DetectionFormat.DOTA: ".txt", DetectionFormat.JSON: ".json"}


def validate_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    result, error = common_parameters(params)
    if error:
        return None, error

    if not params.get("output_dir"):
        return None, "output_dir parameter is required"
    result["output_dir"] = str(params["output_dir"])

    try:
        result["format"] = DetectionFormat(params.get("format", DetectionFormat.DOTA.value))
    except ValueError:
        return None, f"Invalid format: {params.get('format')!r} (expected 'dota-obb' or 'json')"

    checks = (
        ("count", as_int, {"default": 1, "minimum": 1}),
        ("n_vehicles", as_int, {"default": 20, "minimum": 1}),
        ("altitude_m", as_float, {"default": DEFAULT_ALTITUDE_M}),
        ("dim_noise_sigma", as_float, {"default": 0.0}),
        ("outlier_fraction", as_float, {"default": 0.0}),
        ("reference_height_m", as_float, {}),
    )
    for key, parse, kwargs in checks:
        value, error = parse(params, key, **kwargs)
        if error:
            return None, error
        result[key] = value
    result["orthographic"] = bool(params.get("orthographic", False))
    return result, None


def _truth_payload(scene: SyntheticScene, intrinsics) -> dict:
    payload = scene.truth.to_dict()
    payload.update(
        {
            "seed": scene.seed,
            "n_vehicles": len(scene.spec.vehicles),
            "n_detections": len(scene.detections),
            "n_skipped": scene.n_skipped,
            "outlier_indices": scene.outlier_indices,
            "dim_noise_sigma": scene.spec.dim_noise_sigma,
            "intrinsics": {
                "fx": intrinsics.fx,
                "fy": intrinsics.fy,
                "cx": intrinsics.cx,
                "cy": intrinsics.cy,
                "image_width": intrinsics.image_width,
                "image_height": intrinsics.image_height,
            },
        }
    )
    return payload


def write_scene(scene: SyntheticScene, output_dir: Path, fmt: DetectionFormat) -> Tuple[Path, Path]:
    stem = scene_stem(scene.seed, round(scene.spec.pose.pitch_deg, 6))
    target = SecurityUtils.resolve_within(output_dir, f"{stem}{SUFFIXES[fmt]}")
    text = dump_detections_json(scene.detections) if fmt == DetectionFormat.JSON else format_dota_obb(scene.detections)
    target.write_text(text, encoding="utf-8")
    sidecar = truth_sidecar_path(target)
    sidecar.write_text(
        json.dumps(_truth_payload(scene, scene.spec.intrinsics), indent=2, allow_nan=False), encoding="utf-8"
    )
    return target, sidecar


def handler(event, context=None):
    """Generate seeded synthetic detection files"""
    validated, error = validate_parameters(parameters(event))
    if error:
        return invalid(error)

    try:
        config, _ = load_config(validated)
        output_dir = Path(validated["output_dir"])
        output_dir.mkdir(parents=True, exist_ok=True)

        scene_kwargs = {
            "n_vehicles": validated["n_vehicles"],
            "altitude_m": validated["altitude_m"],
            "pitch_deg": -90.0 if validated["orthographic"] else config.pitch_deg,
            "intrinsics": config.intrinsics(),
            "dim_noise_sigma": validated["dim_noise_sigma"],
            "outlier_fraction": validated["outlier_fraction"],
            "orthographic": validated["orthographic"],
            "category": config.category_list[0],
        }
        if validated["reference_height_m"] is not None:
            scene_kwargs["reference_height_m"] = validated["reference_height_m"]

        seeds = list(range(config.seed, config.seed + validated["count"]))
        scenes = generate_batch(seeds, workers=config.workers, **scene_kwargs)

        files = []
        for scene in scenes:
            target, sidecar = write_scene(scene, output_dir, validated["format"])
            files.append(
                {
                    "seed": scene.seed,
                    "detections": target.name,
                    "truth": sidecar.name,
                    "n_detections": len(scene.detections),
                    "s_true": scene.truth.s_true,
                }
            )
        logger.info(f"[SYNTH] Wrote {len(files)} scene(s) to {output_dir}")
        return ok({"n_scenes": len(files), "format": validated["format"].value, "files": files})

    except Exception as e:
        return failure(e, "synth")
