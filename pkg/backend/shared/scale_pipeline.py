# backend/shared/scale_pipeline.py
"""
Dual-dimension scale recovery for one image, end to end:

    filter anchors -> per-instance geometry and scale -> IQR aggregation -> resolve

ScaleEstimator keeps running counters across images (like a rules engine
processing a stream of frames). It is otherwise stateless, so separate
images may be estimated from worker threads.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from shared.aggregation import AggregationResult, FilterConfig, filter_detections, iqr_aggregate
from shared.errors import DegenerateDetectionError
from shared.geometry_core import (
    CameraIntrinsics,
    CameraPose,
    EffectiveDims,
    InstanceScale,
    OrientedDetection,
    VehiclePrior,
    ViewingGeometry,
    effective_dims,
    instance_scale,
    naive_instance_scale,
    viewing_geometry,
)
from shared.resolution_crop import ScaleReport, ScaleStatus, insufficient_report, resolve_scale

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceEstimate:
    detection_index: int
    detection: OrientedDetection
    geometry: ViewingGeometry
    dims: EffectiveDims
    scale: InstanceScale
    naive: InstanceScale


@dataclass
class EstimationResult:
    detections: List[OrientedDetection]
    kept_indices: List[int]
    instances: List[InstanceEstimate]
    report: ScaleReport
    aggregation: Optional[AggregationResult] = None
    skipped_degenerate: List[int] = field(default_factory=list)
    naive_mode: bool = False

    @property
    def status(self) -> ScaleStatus:
        return self.report.status

    @property
    def instance_scales(self) -> List[float]:
        source = "naive" if self.naive_mode else "scale"
        return [getattr(inst, source).s_fused for inst in self.instances]

    @property
    def inlier_mask(self) -> List[bool]:
        """One flag per scored instance, in instance order"""
        if self.aggregation is None:
            return [False] * len(self.instances)
        return self.aggregation.inlier_mask()

    @property
    def inlier_detection_indices(self) -> List[int]:
        return [inst.detection_index for inst, keep in zip(self.instances, self.inlier_mask) if keep]


class ScaleEstimator:
    """Recovers the image scale from vehicle boxes under a fixed camera model"""

    def __init__(
        self,
        intrinsics: CameraIntrinsics,
        pose: Optional[CameraPose] = None,
        prior: Optional[VehiclePrior] = None,
        filter_config: Optional[FilterConfig] = None,
        planar: bool = False,
    ):
        self.intrinsics = intrinsics
        self.pose = pose or CameraPose()
        self.prior = prior or VehiclePrior()
        self.filter_config = filter_config or FilterConfig()
        self.planar = planar
        self._lock = threading.Lock()
        self.stats = {
            "images_processed": 0,
            "images_skipped": 0,
            "instances_scaled": 0,
            "instances_skipped": 0,
        }

    def __repr__(self):
        return (
            f"ScaleEstimator(f={self.intrinsics.focal_length}, pitch_deg={self.pose.pitch_deg:.3f}, "
            f"prior={self.prior}, planar={self.planar})"
        )

    def with_pose(self, pose: CameraPose) -> "ScaleEstimator":
        return ScaleEstimator(self.intrinsics, pose, self.prior, self.filter_config, self.planar)

    def with_intrinsics(self, intrinsics: CameraIntrinsics) -> "ScaleEstimator":
        return ScaleEstimator(intrinsics, self.pose, self.prior, self.filter_config, self.planar)

    def _bump(self, key: str, amount: int = 1):
        with self._lock:
            self.stats[key] += amount

    def score_instance(self, index: int, det: OrientedDetection) -> InstanceEstimate:
        geom = viewing_geometry(self.intrinsics, self.pose, det, planar=self.planar)
        dims = effective_dims(self.prior, geom)
        return InstanceEstimate(
            detection_index=index,
            detection=det,
            geometry=geom,
            dims=dims,
            scale=instance_scale(det, dims, geom, detection_index=index),
            naive=naive_instance_scale(det, self.prior, detection_index=index),
        )

    def estimate(self, detections: Sequence[OrientedDetection]) -> EstimationResult:
        return self._run(detections, naive=False)

    def estimate_naive(self, detections: Sequence[OrientedDetection]) -> EstimationResult:
        """Same pipeline with box edges taken as the vehicle footprint"""
        return self._run(detections, naive=True)

    def _run(self, detections: Sequence[OrientedDetection], naive: bool) -> EstimationResult:
        detections = list(detections)
        outcome = filter_detections(detections, self.filter_config)

        instances: List[InstanceEstimate] = []
        skipped: List[int] = []
        if outcome.sufficient:
            for index, det in zip(outcome.kept_indices, outcome.kept):
                try:
                    instances.append(self.score_instance(index, det))
                except DegenerateDetectionError as e:
                    skipped.append(index)
                    logger.warning(f"[SCALE] Skipping detection {index}: {e}")

        self._bump("instances_scaled", len(instances))
        self._bump("instances_skipped", len(skipped))

        if len(instances) < self.filter_config.min_count:
            if outcome.sufficient:
                logger.warning(
                    f"[SCALE] Only {len(instances)} scorable anchors after skipping {len(skipped)} degenerate boxes"
                )
            self._bump("images_skipped")
            return EstimationResult(
                detections=detections,
                kept_indices=outcome.kept_indices,
                instances=instances,
                report=insufficient_report(
                    len(detections), len(instances) if outcome.sufficient else outcome.n_valid
                ),
                skipped_degenerate=skipped,
                naive_mode=naive,
            )

        scales = [(inst.naive if naive else inst.scale).s_fused for inst in instances]
        agg = iqr_aggregate(scales)
        report = resolve_scale(agg, self.intrinsics, self.pose, n_detections=len(detections), orthophoto=self.planar)
        self._bump("images_processed")

        logger.info(
            f"[SCALE] s_hat={report.global_scale:.6f} m/px from {agg.n_inliers}/{agg.n_valid} inliers"
            f"{' (naive)' if naive else ''}"
        )
        return EstimationResult(
            detections=detections,
            kept_indices=outcome.kept_indices,
            instances=instances,
            report=report,
            aggregation=agg,
            skipped_degenerate=skipped,
            naive_mode=naive,
        )

    def get_statistics(self) -> Dict[str, int]:
        with self._lock:
            return dict(self.stats)


def orthophoto_estimator(
    intrinsics: CameraIntrinsics,
    prior: Optional[VehiclePrior] = None,
    filter_config: Optional[FilterConfig] = None,
) -> ScaleEstimator:
    """Planar nadir input: pitch fixed at -90 degrees and the height term disabled"""
    prior = (prior or VehiclePrior()).without_height()
    return ScaleEstimator(intrinsics, CameraPose(), prior, filter_config, planar=True)
