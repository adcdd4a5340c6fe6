# backend/handlers/evaluate/main.py
"""
evaluate: seeded synthetic batches -> MAPE and used ratio for the decoupled
model and the naive baseline, per pitch, plus an optional threshold sweep.
"""
import logging
import math
from typing import Optional, Tuple

from handlers.common import as_float, as_int, common_parameters, failure, invalid, load_config, ok, parameters
from shared.evaluation import compare_naive, default_estimator_factory, sweep_thresholds
from shared.report import write_report
from shared.synth_oracle import DEFAULT_ALTITUDE_M, generate_batch

logger = logging.getLogger(__name__)


def _float_list(params: dict, key: str) -> Tuple[Optional[list], Optional[str]]:
    values = params.get(key)
    if values is None:
        return None, None
    if isinstance(values, str):
        values = [v for v in values.split(",") if v.strip()]
    try:
        return [float(v) for v in values], None
    except (TypeError, ValueError):
        return None, f"{key} must be a list of numbers"


def validate_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    result, error = common_parameters(params)
    if error:
        return None, error

    for key, default in (("count", 50), ("n_vehicles", 20)):
        value, error = as_int(params, key, default=default, minimum=1)
        if error:
            return None, error
        result[key] = value
    for key, default in (("altitude_m", DEFAULT_ALTITUDE_M), ("dim_noise_sigma", 0.0), ("outlier_fraction", 0.0)):
        value, error = as_float(params, key, default=default)
        if error:
            return None, error
        result[key] = value

    for key in ("pitches_deg", "conf_thresholds", "min_counts", "outlier_confidence_range"):
        values, error = _float_list(params, key)
        if error:
            return None, error
        result[key] = values

    if result["min_counts"] is not None:
        if any(v != math.floor(v) or v < 1 for v in result["min_counts"]):
            return None, "min_counts must be integers >= 1"
        result["min_counts"] = [int(v) for v in result["min_counts"]]
    if (result["conf_thresholds"] is None) != (result["min_counts"] is None):
        return None, "conf_thresholds and min_counts must be given together"
    rng = result["outlier_confidence_range"]
    if rng is not None and len(rng) != 2:
        return None, "outlier_confidence_range must be a pair [low, high]"
    result["output"] = params.get("output")
    return result, None


def handler(event, context=None):
    """Evaluate the estimator on seeded synthetic batches"""
    validated, error = validate_parameters(parameters(event))
    if error:
        return invalid(error)

    try:
        config, provenance = load_config(validated)
        seeds = list(range(config.seed, config.seed + validated["count"]))
        pitches = validated["pitches_deg"] or [config.pitch_deg]
        factory = default_estimator_factory(config.prior(), config.filter_config())

        scene_kwargs = {
            "n_vehicles": validated["n_vehicles"],
            "altitude_m": validated["altitude_m"],
            "intrinsics": config.intrinsics(),
            "dim_noise_sigma": validated["dim_noise_sigma"],
            "outlier_fraction": validated["outlier_fraction"],
            "category": config.category_list[0],
        }
        if validated["outlier_confidence_range"] is not None:
            scene_kwargs["outlier_confidence_range"] = tuple(validated["outlier_confidence_range"])

        runs = []
        sweep_scenes = None
        for pitch in pitches:
            scenes = generate_batch(seeds, workers=config.workers, pitch_deg=pitch, **scene_kwargs)
            comparison = compare_naive(scenes, factory, workers=config.workers)
            runs.append({"pitch_deg": pitch, **comparison})
            if sweep_scenes is None:
                sweep_scenes = scenes

        sweep = None
        if validated["conf_thresholds"] is not None:
            table = sweep_thresholds(
                sweep_scenes, validated["conf_thresholds"], validated["min_counts"], config.prior(), config.workers
            )
            sweep = table.astype(object).where(table.notna(), None).to_dict(orient="records")

        body = {
            "meta": {
                "seeds": [seeds[0], seeds[-1]],
                "n_images_per_pitch": len(seeds),
                "scene": {k: v for k, v in scene_kwargs.items() if k != "intrinsics"},
                "focal_px": config.intrinsics().focal_length,
                "filter": {"conf_threshold": config.conf_threshold, "min_count": config.min_count},
                "provenance": provenance,
            },
            "runs": runs,
            "sweep": sweep,
        }
        if validated.get("output"):
            write_report(body, validated["output"])
        return ok(body)

    except Exception as e:
        return failure(e, "evaluate")
