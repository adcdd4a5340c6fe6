# backend/shared/sensitivity.py
"""
First-order sensitivity of the recovered resolution to pitch and focal-length bias.

Closed forms:
- pitch:  dr/r = ds/s - cot(theta) * dtheta, so the pitch coefficient is -cot(theta)
  and vanishes at nadir
- focal:  with the planar angles alpha = atan((u - cx)/f), gamma = atan((v - cy)/f),
  dalpha/df = -(u - cx)/(f^2 + (u - cx)^2) = -sin(alpha)cos(alpha)/f (same for gamma)

The planar angles are not the viewing elevation used by the estimator, so
the exact derivative of the viewing elevation is reported next to them. Each
coefficient is checked against a central finite difference of the real
pipeline.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from shared.errors import ScaleRecoveryError
from shared.geometry_core import (
    CameraIntrinsics,
    CameraPose,
    OrientedDetection,
    relative_orientation,
    viewing_elevation,
)
from shared.scale_pipeline import EstimationResult, ScaleEstimator

logger = logging.getLogger(__name__)

DEFAULT_THETA_STEP_RAD = 1e-3
DEFAULT_FOCAL_STEP_PX = 1.0
DEFAULT_TOLERANCE = 0.02
REL_GAP_FLOOR = 1e-9

THETA = "theta"
FOCAL = "f"


@dataclass(frozen=True)
class FdEntry:
    name: str
    parameter: str
    analytic: float
    finite_difference: float
    rel_gap: float
    step: float
    tolerance: float

    @property
    def within_tolerance(self) -> bool:
        return self.rel_gap <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameter": self.parameter,
            "analytic": self.analytic,
            "finite_difference": self.finite_difference,
            "rel_gap": self.rel_gap,
            "step": self.step,
            "within_tolerance": self.within_tolerance,
        }


@dataclass
class SensitivityReport:
    d_r_rel_per_d_theta: float
    tolerance: float
    detection_indices: List[int] = field(default_factory=list)
    d_alpha_per_d_f: List[float] = field(default_factory=list)
    d_gamma_per_d_f: List[float] = field(default_factory=list)
    d_alpha_viewing_per_d_f: List[float] = field(default_factory=list)
    fd_check: List[FdEntry] = field(default_factory=list)
    applicable: bool = True
    sample_pixel: Optional[Tuple[float, float]] = None

    @property
    def all_within_tolerance(self) -> bool:
        return all(entry.within_tolerance for entry in self.fd_check)

    def to_dict(self) -> dict:
        return {
            "d_r_rel_per_d_theta": self.d_r_rel_per_d_theta,
            "instances": [
                {
                    "detection_index": idx,
                    "d_alpha_per_d_f": da,
                    "d_gamma_per_d_f": dg,
                    "d_alpha_viewing_per_d_f": dv,
                }
                for idx, da, dg, dv in zip(
                    self.detection_indices,
                    self.d_alpha_per_d_f,
                    self.d_gamma_per_d_f,
                    self.d_alpha_viewing_per_d_f,
                )
            ],
            "fd_check": [entry.to_dict() for entry in self.fd_check],
            "sample_pixel": None if self.sample_pixel is None else list(self.sample_pixel),
            "tolerance": self.tolerance,
            "applicable": self.applicable,
            "all_within_tolerance": self.all_within_tolerance,
        }


def relative_gap(analytic: float, numeric: float, abs_floor: float = REL_GAP_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), abs_floor)


def central_difference(fn: Callable[[float], float], x: float, step: float) -> float:
    if not step > 0:
        raise ScaleRecoveryError(f"Finite-difference step must be positive, got {step}")
    return (fn(x + step) - fn(x - step)) / (2.0 * step)


def pitch_sensitivity(pose: CameraPose) -> float:
    """Coefficient of dtheta in dr/r, i.e. -cot(theta)"""
    if pose.is_nadir:
        return 0.0
    return -math.cos(pose.pitch_rad) / math.sin(pose.pitch_rad)


def focal_sensitivity(intr: CameraIntrinsics, u: float, v: float) -> Tuple[float, float]:
    f = intr.focal_length
    du, dv = u - intr.cx, v - intr.cy
    return (-du / (f * f + du * du), -dv / (f * f + dv * dv))


def focal_sensitivity_trig(intr: CameraIntrinsics, u: float, v: float) -> Tuple[float, float]:
    f = intr.focal_length
    alpha = math.atan2(u - intr.cx, f)
    gamma = math.atan2(v - intr.cy, f)
    return (-math.sin(alpha) * math.cos(alpha) / f, -math.sin(gamma) * math.cos(gamma) / f)


def viewing_elevation_focal_derivative(intr: CameraIntrinsics, pose: CameraPose, u: float, v: float) -> float:
    """Exact d(alpha)/df of the viewing elevation at pixel (u, v)"""
    f = intr.focal_length
    ray = np.array([u - intr.cx, v - intr.cy, f])
    normal = pose.up_normal()
    norm = float(np.linalg.norm(ray))
    along = float(ray @ normal)
    cos_alpha = float(np.linalg.norm(np.cross(ray, normal))) / norm
    if cos_alpha < 1e-12:
        # looking straight down the ground normal: alpha is stationary in f
        return 0.0
    sin_alpha = abs(along) / norm
    d_sin = (math.copysign(1.0, along) * normal[2] - sin_alpha * f / norm) / norm
    return d_sin / cos_alpha


def _log_ratio_slope(plus: float, minus: float, step: float) -> float:
    return (math.log(plus) - math.log(minus)) / (2.0 * step)


def _entry(name, parameter, analytic, numeric, step, tolerance) -> FdEntry:
    return FdEntry(
        name=name,
        parameter=parameter,
        analytic=float(analytic),
        finite_difference=float(numeric),
        rel_gap=relative_gap(analytic, numeric),
        step=step,
        tolerance=tolerance,
    )


def _sample_pixel_detection(base: EstimationResult, intr: CameraIntrinsics) -> Optional[OrientedDetection]:
    """Inlier farthest from the principal point, where the focal terms are largest"""
    candidates = [inst.detection for inst, keep in zip(base.instances, base.inlier_mask) if keep]
    if not candidates:
        return None
    return max(candidates, key=lambda d: math.hypot(d.center_u - intr.cx, d.center_v - intr.cy))


def _theta_entries(estimator, detections, base, step, tolerance) -> List[FdEntry]:
    pose = estimator.pose
    plus = estimator.with_pose(pose.with_offset(step)).estimate(detections)
    minus = estimator.with_pose(pose.with_offset(-step)).estimate(detections)
    if not (plus.report.ok and minus.report.ok):
        logger.info("[SENSITIVITY] Pitch check not applicable: perturbed run lost its anchors")
        return []

    coefficient = pitch_sensitivity(pose)
    pitch_fd = central_difference(lambda t: -math.log(abs(math.sin(t))), pose.pitch_rad, step)
    scale_slope = _log_ratio_slope(plus.report.global_scale, minus.report.global_scale, step)
    resolution_fd = _log_ratio_slope(plus.report.avg_resolution, minus.report.avg_resolution, step)
    return [
        _entry("pitch_term", THETA, coefficient, pitch_fd, step, tolerance),
        _entry("resolution", THETA, scale_slope + coefficient, resolution_fd, step, tolerance),
    ]


def _focal_entries(estimator, detections, base, step, tolerance, sample_pixel) -> Tuple[List[FdEntry], Optional[tuple]]:
    intr, pose = estimator.intrinsics, estimator.pose
    if sample_pixel is None:
        det = _sample_pixel_detection(base, intr)
        if det is None:
            return [], None
    else:
        det = OrientedDetection(float(sample_pixel[0]), float(sample_pixel[1]), 2.0, 1.0)
    u, v = det.center_u, det.center_v
    f = intr.focal_length

    d_alpha, d_gamma = focal_sensitivity(intr, u, v)
    entries = [
        _entry(
            "alpha_planar", FOCAL, d_alpha,
            central_difference(lambda fv: math.atan((u - intr.cx) / fv), f, step), step, tolerance,
        ),
        _entry(
            "gamma_planar", FOCAL, d_gamma,
            central_difference(lambda fv: math.atan((v - intr.cy) / fv), f, step), step, tolerance,
        ),
        _entry(
            "alpha_viewing", FOCAL, viewing_elevation_focal_derivative(intr, pose, u, v),
            central_difference(lambda d: viewing_elevation(intr.with_focal_offset(d), pose, u, v), 0.0, step),
            step, tolerance,
        ),
        # the radial direction never involves f
        _entry(
            "gamma_relative", FOCAL, 0.0,
            central_difference(lambda d: relative_orientation(intr.with_focal_offset(d), det), 0.0, step),
            step, tolerance,
        ),
    ]

    if base.report.ok and base.report.altitude_m is not None:
        plus = estimator.with_intrinsics(intr.with_focal_offset(step)).estimate(detections)
        minus = estimator.with_intrinsics(intr.with_focal_offset(-step)).estimate(detections)
        if plus.report.ok and minus.report.ok:
            scale_slope = _log_ratio_slope(plus.report.global_scale, minus.report.global_scale, step)
            altitude_fd = _log_ratio_slope(plus.report.altitude_m, minus.report.altitude_m, step)
            entries.append(_entry("altitude", FOCAL, scale_slope + 1.0 / f, altitude_fd, step, tolerance))
    return entries, (u, v)


def finite_difference_check(
    estimator: ScaleEstimator,
    detections: Sequence[OrientedDetection],
    param: str,
    step: Optional[float] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    sample_pixel: Optional[Tuple[float, float]] = None,
    base: Optional[EstimationResult] = None,
) -> List[FdEntry]:
    """
    Compare analytic coefficients with central differences of the pipeline.

    Returns an empty list when the unperturbed image has too few anchors.
    """
    if base is None:
        base = estimator.estimate(detections)
    if param == THETA:
        if not base.report.ok:
            logger.info("[SENSITIVITY] Pitch check not applicable: insufficient anchors")
            return []
        return _theta_entries(estimator, detections, base, step or DEFAULT_THETA_STEP_RAD, tolerance)
    if param == FOCAL:
        if not base.report.ok and sample_pixel is None:
            logger.info("[SENSITIVITY] Focal check not applicable: insufficient anchors")
            return []
        entries, _ = _focal_entries(estimator, detections, base, step or DEFAULT_FOCAL_STEP_PX, tolerance, sample_pixel)
        return entries
    raise ScaleRecoveryError(f"Unknown sensitivity parameter '{param}' (expected '{THETA}' or '{FOCAL}')")


def sensitivity_report(
    estimator: ScaleEstimator,
    detections: Sequence[OrientedDetection],
    theta_step: float = DEFAULT_THETA_STEP_RAD,
    focal_step: float = DEFAULT_FOCAL_STEP_PX,
    tolerance: float = DEFAULT_TOLERANCE,
    sample_pixel: Optional[Tuple[float, float]] = None,
    base: Optional[EstimationResult] = None,
) -> SensitivityReport:
    if base is None:
        base = estimator.estimate(detections)
    intr, pose = estimator.intrinsics, estimator.pose

    report = SensitivityReport(d_r_rel_per_d_theta=pitch_sensitivity(pose), tolerance=tolerance)
    for inst in base.instances:
        u, v = inst.detection.center_u, inst.detection.center_v
        d_alpha, d_gamma = focal_sensitivity(intr, u, v)
        report.detection_indices.append(inst.detection_index)
        report.d_alpha_per_d_f.append(d_alpha)
        report.d_gamma_per_d_f.append(d_gamma)
        report.d_alpha_viewing_per_d_f.append(viewing_elevation_focal_derivative(intr, pose, u, v))

    if not base.report.ok:
        report.applicable = False
        logger.info("[SENSITIVITY] Finite-difference checks skipped: insufficient anchors")
        return report

    report.fd_check.extend(finite_difference_check(estimator, detections, THETA, theta_step, tolerance, base=base))
    focal_entries, report.sample_pixel = _focal_entries(
        estimator, detections, base, focal_step, tolerance, sample_pixel
    )
    report.fd_check.extend(focal_entries)

    failing = [e.name for e in report.fd_check if not e.within_tolerance]
    if failing:
        logger.warning(f"[SENSITIVITY] Linearization gap above {tolerance:.3f} for: {', '.join(failing)}")
    return report
