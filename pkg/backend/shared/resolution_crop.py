# backend/shared/resolution_crop.py
"""
Resolution and Satellite Crop Planning
======================================
Converts the aggregated nadir-equivalent scale into flight altitude and
average ground resolution, then sizes and tiles satellite crops so that a
gallery patch covers the same ground footprint as the UAV query image.

- H_uav = s_hat * f
- r = s_hat / |sin(pitch)|
- L_met = r * W_img ; S_sat = L_met / GSD_sat
- windows slide with a stride of half the crop size; the last row/column is
  clamped against the map edge
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from shared.aggregation import AggregationResult
from shared.errors import CropPlanningError
from shared.geometry_core import CameraIntrinsics, CameraPose

logger = logging.getLogger(__name__)

SUCCESS_RADIUS_FACTOR = math.sqrt(2.0)
STRIDE_FRACTION = 0.5


class ScaleStatus(str, Enum):
    OK = "ok"
    INSUFFICIENT_ANCHORS = "insufficient-anchors"


@dataclass(frozen=True)
class ScaleReport:
    status: ScaleStatus
    n_detections: int
    n_valid: int
    n_inliers: int = 0
    global_scale: Optional[float] = None
    altitude_m: Optional[float] = None
    avg_resolution: Optional[float] = None
    pitch_rad: Optional[float] = None
    focal_px: Optional[float] = None
    orthophoto: bool = False

    @property
    def ok(self) -> bool:
        return self.status == ScaleStatus.OK

    def gsd_ratio(self, gsd_sat: float) -> float:
        """Zoom factor between the UAV resolution and the satellite GSD"""
        if not self.ok:
            raise CropPlanningError("No resolution available for an image without enough anchors")
        if not gsd_sat > 0:
            raise CropPlanningError(f"Satellite GSD must be positive, got {gsd_sat}")
        return self.avg_resolution / gsd_sat

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "n_detections": self.n_detections,
            "n_valid": self.n_valid,
            "n_inliers": self.n_inliers,
            "global_scale": self.global_scale,
            "altitude_m": self.altitude_m,
            "avg_resolution": self.avg_resolution,
            "pitch_deg": None if self.pitch_rad is None else math.degrees(self.pitch_rad),
            "focal_px": self.focal_px,
            "orthophoto": self.orthophoto,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScaleReport":
        try:
            pitch_deg = data.get("pitch_deg")
            return cls(
                status=ScaleStatus(data["status"]),
                n_detections=int(data["n_detections"]),
                n_valid=int(data["n_valid"]),
                n_inliers=int(data.get("n_inliers") or 0),
                global_scale=data.get("global_scale"),
                altitude_m=data.get("altitude_m"),
                avg_resolution=data.get("avg_resolution"),
                pitch_rad=None if pitch_deg is None else math.radians(pitch_deg),
                focal_px=data.get("focal_px"),
                orthophoto=bool(data.get("orthophoto", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CropPlanningError(f"Malformed scale section: {e}") from e


@dataclass(frozen=True)
class MapBounds:
    """Axis-aligned rectangle in satellite-map pixels"""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise CropPlanningError(f"Map bounds must be non-empty ({self.width}x{self.height})")

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)

    def contains(self, window: "CropWindow") -> bool:
        return (
            window.x >= self.x
            and window.y >= self.y
            and window.x + window.size <= self.x + self.width
            and window.y + window.size <= self.y + self.height
        )


@dataclass(frozen=True)
class CropWindow:
    x: int
    y: int
    size: int

    def center(self) -> Tuple[float, float]:
        return (self.x + self.size / 2.0, self.y + self.size / 2.0)


@dataclass(frozen=True)
class MapGeoTransform:
    """Flat north-up affine between map pixels and map meters"""

    origin_x_m: float
    origin_y_m: float
    gsd: float

    def __post_init__(self):
        if not self.gsd > 0:
            raise CropPlanningError(f"Map GSD must be positive, got {self.gsd}")

    def pixel_to_meters(self, px: float, py: float) -> Tuple[float, float]:
        return (self.origin_x_m + px * self.gsd, self.origin_y_m - py * self.gsd)

    def meters_to_pixel(self, x_m: float, y_m: float) -> Tuple[float, float]:
        return ((x_m - self.origin_x_m) / self.gsd, (self.origin_y_m - y_m) / self.gsd)


@dataclass
class CropPlan:
    crop_size_px: float
    footprint_m: float
    stride_px: float
    gsd_sat: float
    bounds: MapBounds
    windows: List[CropWindow] = field(default_factory=list)
    oversized: bool = False

    @property
    def window_size_px(self) -> int:
        return self.windows[0].size if self.windows else 0

    def to_dict(self, transform: Optional[MapGeoTransform] = None) -> dict:
        windows = []
        for w in self.windows:
            entry = {"x": w.x, "y": w.y, "size": w.size}
            if transform is not None:
                entry["center_m"] = list(transform.pixel_to_meters(*w.center()))
            windows.append(entry)
        return {
            "crop_size_px": self.crop_size_px,
            "footprint_m": self.footprint_m,
            "stride_px": self.stride_px,
            "gsd_sat": self.gsd_sat,
            "bounds": {
                "x": self.bounds.x, "y": self.bounds.y, "width": self.bounds.width, "height": self.bounds.height
            },
            "n_windows": len(self.windows),
            "oversized": self.oversized,
            "windows": windows,
        }


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def resolve_scale(
    agg: AggregationResult,
    intr: CameraIntrinsics,
    pose: CameraPose,
    n_detections: Optional[int] = None,
    orthophoto: bool = False,
) -> ScaleReport:
    sin_pitch = abs(math.sin(pose.pitch_rad))
    if sin_pitch <= 0:
        raise CropPlanningError("Horizontal pitch has no ground resolution")
    s_hat = agg.global_scale
    f = intr.focal_length
    return ScaleReport(
        status=ScaleStatus.OK,
        n_detections=agg.n_valid if n_detections is None else n_detections,
        n_valid=agg.n_valid,
        n_inliers=agg.n_inliers,
        global_scale=s_hat,
        # an orthophoto has no flight altitude
        altitude_m=None if orthophoto else s_hat * f,
        avg_resolution=s_hat / sin_pitch,
        pitch_rad=pose.pitch_rad,
        focal_px=f,
        orthophoto=orthophoto,
    )


def insufficient_report(n_detections: int, n_valid: int) -> ScaleReport:
    return ScaleReport(status=ScaleStatus.INSUFFICIENT_ANCHORS, n_detections=n_detections, n_valid=n_valid)


def _axis_origins(start: int, extent: int, size: int, stride: int) -> List[int]:
    origins = []
    pos = 0
    while pos < extent - size:
        origins.append(pos)
        pos += stride
    origins.append(extent - size)
    return [start + p for p in sorted(set(origins))]


def plan_crops(report: ScaleReport, uav_width_px: float, map_bounds: MapBounds, gsd_sat: float) -> CropPlan:
    """Scale-consistent sliding-window crops over the satellite search region"""
    if not report.ok:
        raise CropPlanningError("Cannot plan crops for an image without enough anchors")
    if not gsd_sat > 0:
        raise CropPlanningError(f"Satellite GSD must be positive, got {gsd_sat}")
    if not uav_width_px > 0:
        raise CropPlanningError(f"UAV image width must be positive, got {uav_width_px}")

    footprint_m = report.avg_resolution * uav_width_px
    crop_size = footprint_m / gsd_sat
    size_px = _round_half_up(crop_size)
    if size_px < 1:
        raise CropPlanningError(f"Crop of {crop_size:.3f} px is below one satellite pixel")

    plan = CropPlan(
        crop_size_px=crop_size,
        footprint_m=footprint_m,
        stride_px=STRIDE_FRACTION * crop_size,
        gsd_sat=gsd_sat,
        bounds=map_bounds,
    )

    if size_px > map_bounds.width or size_px > map_bounds.height:
        side = min(map_bounds.width, map_bounds.height)
        x = map_bounds.x + (map_bounds.width - side) // 2
        y = map_bounds.y + (map_bounds.height - side) // 2
        plan.windows = [CropWindow(x, y, side)]
        plan.oversized = True
        logger.warning(
            f"[CROP] Crop of {size_px} px exceeds the {map_bounds.width}x{map_bounds.height} map; "
            f"using one centered {side} px window"
        )
        return plan

    stride = max(1, _round_half_up(STRIDE_FRACTION * size_px))
    xs = _axis_origins(map_bounds.x, map_bounds.width, size_px, stride)
    ys = _axis_origins(map_bounds.y, map_bounds.height, size_px, stride)
    plan.windows = [CropWindow(x, y, size_px) for y in ys for x in xs]
    logger.info(f"[CROP] {len(plan.windows)} windows of {size_px} px (stride {stride} px)")
    return plan


def localization_success(
    pred_center: Tuple[float, float], true_center: Tuple[float, float], fov_radius_m: float
) -> bool:
    if not fov_radius_m > 0:
        raise CropPlanningError(f"FoV radius must be positive, got {fov_radius_m}")
    distance = math.hypot(pred_center[0] - true_center[0], pred_center[1] - true_center[1])
    return distance < SUCCESS_RADIUS_FACTOR * fov_radius_m


def fov_radius(report: ScaleReport, uav_width_px: float) -> float:
    """Half the ground footprint of the UAV image, in meters"""
    if not report.ok:
        raise CropPlanningError("No footprint for an image without enough anchors")
    return 0.5 * report.avg_resolution * uav_width_px


def search_bounds(
    center_px: Tuple[float, float], radius_m: float, gsd_sat: float, map_bounds: MapBounds
) -> MapBounds:
    """Sub-rectangle of the map within radius_m of a prior position, clipped to the map"""
    if not radius_m > 0 or not gsd_sat > 0:
        raise CropPlanningError("Search radius and GSD must be positive")
    radius_px = radius_m / gsd_sat
    x0 = max(map_bounds.x, int(math.floor(center_px[0] - radius_px)))
    y0 = max(map_bounds.y, int(math.floor(center_px[1] - radius_px)))
    x1 = min(map_bounds.x + map_bounds.width, int(math.ceil(center_px[0] + radius_px)))
    y1 = min(map_bounds.y + map_bounds.height, int(math.ceil(center_px[1] + radius_px)))
    if x1 <= x0 or y1 <= y0:
        raise CropPlanningError(f"Search region around {center_px} does not overlap the map")
    return MapBounds(x0, y0, x1 - x0, y1 - y0)


def mismatched_report(report: ScaleReport, delta: float) -> ScaleReport:
    """Report as if the altitude were H * (1 + delta); used for scale-mismatch studies"""
    if not report.ok:
        raise CropPlanningError("Cannot perturb a report without a scale")
    if delta <= -1.0:
        raise CropPlanningError(f"Altitude factor 1 + delta must stay positive (delta={delta})")
    factor = 1.0 + delta
    return ScaleReport(
        status=report.status,
        n_detections=report.n_detections,
        n_valid=report.n_valid,
        n_inliers=report.n_inliers,
        global_scale=report.global_scale * factor,
        altitude_m=None if report.altitude_m is None else report.altitude_m * factor,
        avg_resolution=report.avg_resolution * factor,
        pitch_rad=report.pitch_rad,
        focal_px=report.focal_px,
        orthophoto=report.orthophoto,
    )
