# backend/shared/evaluation.py
"""
Batch evaluation on synthetic scenes: per-image absolute percentage error,
MAPE, used ratio, the naive-baseline ablation, the confidence/N_min sweep
and crop sizes under altitude mismatch.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from shared.aggregation import FilterConfig
from shared.errors import CropPlanningError, EmptyInputError, ScaleRecoveryError
from shared.geometry_core import VehiclePrior
from shared.resolution_crop import ScaleReport, mismatched_report
from shared.scale_pipeline import ScaleEstimator, orthophoto_estimator
from shared.synth_oracle import SyntheticScene

logger = logging.getLogger(__name__)

EstimatorFactory = Callable[[SyntheticScene], ScaleEstimator]

FRAME_COLUMNS = ["seed", "status", "n_detections", "n_inliers", "s_true", "s_hat", "ape"]


def absolute_percentage_error(estimate: float, truth: float) -> float:
    """|estimate - truth| / truth, in percent"""
    if not truth > 0:
        raise ScaleRecoveryError(f"Ground-truth scale must be positive, got {truth}")
    return abs(estimate - truth) / truth * 100.0


def mape(errors: Iterable[float]) -> float:
    values = np.asarray([e for e in errors if e is not None and not pd.isna(e)], dtype=float)
    if values.size == 0:
        raise EmptyInputError("MAPE of an empty error list")
    return float(values.mean())


def default_estimator_factory(
    prior: Optional[VehiclePrior] = None, filter_config: Optional[FilterConfig] = None
) -> EstimatorFactory:
    """Estimator matched to each scene's camera; orthographic scenes get the orthophoto estimator"""

    def factory(scene: SyntheticScene) -> ScaleEstimator:
        spec = scene.spec
        if spec.orthographic:
            return orthophoto_estimator(spec.intrinsics, prior, filter_config)
        return ScaleEstimator(spec.intrinsics, spec.pose, prior, filter_config)

    return factory


def _evaluate_one(scene: SyntheticScene, factory: EstimatorFactory, naive: bool) -> dict:
    estimator = factory(scene)
    result = estimator.estimate_naive(scene.detections) if naive else estimator.estimate(scene.detections)
    report = result.report
    s_true = scene.truth.s_true
    return {
        "seed": scene.seed,
        "status": report.status.value,
        "n_detections": report.n_detections,
        "n_inliers": report.n_inliers,
        "s_true": s_true,
        "s_hat": report.global_scale if report.ok else np.nan,
        "ape": absolute_percentage_error(report.global_scale, s_true) if report.ok else np.nan,
    }


def evaluate_scenes(
    scenes: Sequence[SyntheticScene],
    estimator_factory: Optional[EstimatorFactory] = None,
    naive: bool = False,
    workers: int = 1,
) -> pd.DataFrame:
    """One row per scene; skipped images keep NaN s_hat and ape"""
    factory = estimator_factory or default_estimator_factory()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda s: _evaluate_one(s, factory, naive), scenes))
    else:
        rows = [_evaluate_one(s, factory, naive) for s in scenes]
    return pd.DataFrame(rows, columns=FRAME_COLUMNS)


def summarize(frame: pd.DataFrame) -> Dict[str, Optional[float]]:
    n_images = int(len(frame))
    used = frame[frame["status"] == "ok"]
    summary = {
        "n_images": n_images,
        "n_used": int(len(used)),
        "used_ratio": float(len(used) / n_images) if n_images else 0.0,
        "mape": None,
        "median_ape": None,
        "max_ape": None,
    }
    if len(used):
        summary["mape"] = float(used["ape"].mean())
        summary["median_ape"] = float(used["ape"].median())
        summary["max_ape"] = float(used["ape"].max())
    return summary


def compare_naive(
    scenes: Sequence[SyntheticScene],
    estimator_factory: Optional[EstimatorFactory] = None,
    workers: int = 1,
) -> dict:
    """Decoupled model against box edges taken as the vehicle footprint"""
    decoupled = summarize(evaluate_scenes(scenes, estimator_factory, naive=False, workers=workers))
    naive = summarize(evaluate_scenes(scenes, estimator_factory, naive=True, workers=workers))
    logger.info(f"[EVAL] MAPE decoupled={decoupled['mape']} naive={naive['mape']} over {decoupled['n_images']} images")
    return {"decoupled": decoupled, "naive": naive}


def sweep_thresholds(
    scenes: Sequence[SyntheticScene],
    conf_thresholds: Sequence[float],
    min_counts: Sequence[int],
    prior: Optional[VehiclePrior] = None,
    workers: int = 1,
) -> pd.DataFrame:
    rows: List[dict] = []
    for tau in conf_thresholds:
        for n_min in min_counts:
            factory = default_estimator_factory(prior, FilterConfig(conf_threshold=tau, min_count=n_min))
            summary = summarize(evaluate_scenes(scenes, factory, workers=workers))
            rows.append(
                {
                    "conf_threshold": float(tau),
                    "min_count": int(n_min),
                    "used_ratio": summary["used_ratio"],
                    "mape": summary["mape"],
                }
            )
    return pd.DataFrame(rows, columns=["conf_threshold", "min_count", "used_ratio", "mape"])


def mismatch_crop_table(
    report: ScaleReport, uav_width_px: float, gsd_sat: float, deltas: Sequence[float]
) -> pd.DataFrame:
    """Crop size the planner would pick if the altitude were off by each delta"""
    if not gsd_sat > 0:
        raise CropPlanningError(f"Satellite GSD must be positive, got {gsd_sat}")
    rows = []
    for delta in deltas:
        perturbed = mismatched_report(report, delta)
        footprint = perturbed.avg_resolution * uav_width_px
        rows.append(
            {
                "delta": float(delta),
                "altitude_m": perturbed.altitude_m,
                "avg_resolution": perturbed.avg_resolution,
                "footprint_m": footprint,
                "crop_size_px": footprint / gsd_sat,
            }
        )
    return pd.DataFrame(rows, columns=["delta", "altitude_m", "avg_resolution", "footprint_m", "crop_size_px"])
