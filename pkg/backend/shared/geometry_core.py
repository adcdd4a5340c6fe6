# backend/shared/geometry_core.py
"""
Per-Instance Geometry and Decoupled Projection
==============================================
Turns one detected vehicle box into a nadir-equivalent metric scale.

For every oriented box the module derives:
1. The viewing elevation angle alpha of the ray through the box center
   (90 degrees when looking straight down)
2. The relative orientation gamma between the vehicle's long axis and the
   radial direction from the principal point
3. Effective metric length/width of the vehicle as seen in the image, where
   the radial component picks up foreshortening plus the visible side
   (height) of the vehicle and the tangential component stays undistorted
4. The instance scale s = dim_eff * sin(alpha) / dim_pix for both axes,
   fused by equal weighting

Pixel convention: origin top-left, +u right, +v down. Angles are radians.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from shared.errors import (
    DegenerateDetectionError,
    InvalidIntrinsicsError,
    InvalidPoseError,
    InvalidPriorError,
)

logger = logging.getLogger(__name__)

NADIR_PITCH_RAD = -math.pi / 2
DEFAULT_CATEGORY = "small-vehicle"

# Radial vectors shorter than this (pixels) fall back to the image +v axis
MIN_RADIAL_NORM_PX = 1.0
UNIT_NORM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; the model only ever uses the effective focal length"""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        values = (self.fx, self.fy, self.cx, self.cy, self.image_width, self.image_height)
        if not all(math.isfinite(v) for v in values):
            raise InvalidIntrinsicsError(f"Non-finite intrinsics: {values}")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidIntrinsicsError(f"Focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidIntrinsicsError(
                f"Image size must be positive ({self.image_width}x{self.image_height})"
            )
        if not (0 <= self.cx <= self.image_width and 0 <= self.cy <= self.image_height):
            raise InvalidIntrinsicsError(
                f"Principal point ({self.cx}, {self.cy}) outside "
                f"{self.image_width}x{self.image_height} image"
            )

    @classmethod
    def from_focal(cls, focal_px: float, image_width: int, image_height: int) -> "CameraIntrinsics":
        """Square pixels, principal point at the image center"""
        return cls(focal_px, focal_px, image_width / 2.0, image_height / 2.0, image_width, image_height)

    @property
    def focal_length(self) -> float:
        return (self.fx + self.fy) / 2.0

    def contains(self, u: float, v: float) -> bool:
        return 0.0 <= u <= self.image_width and 0.0 <= v <= self.image_height

    def with_focal_offset(self, delta_px: float) -> "CameraIntrinsics":
        """Shift fx and fy together so the effective focal length moves by delta_px"""
        return replace(self, fx=self.fx + delta_px, fy=self.fy + delta_px)


@dataclass(frozen=True)
class CameraPose:
    """Pitch-only attitude; roll is zero and yaw does not enter the model"""

    pitch_rad: float = NADIR_PITCH_RAD

    def __post_init__(self):
        if not math.isfinite(self.pitch_rad) or not (-math.pi < self.pitch_rad < 0.0):
            raise InvalidPoseError(f"Pitch must lie in (-pi, 0), got {self.pitch_rad}")
        if abs(math.sin(self.pitch_rad)) <= 1e-12:
            raise InvalidPoseError("Camera pitch is horizontal; the ground is never viewed")

    @classmethod
    def from_degrees(cls, pitch_deg: float) -> "CameraPose":
        if pitch_deg == -90.0:
            return cls(NADIR_PITCH_RAD)
        return cls(math.radians(pitch_deg))

    @property
    def pitch_deg(self) -> float:
        return math.degrees(self.pitch_rad)

    @property
    def is_nadir(self) -> bool:
        return abs(self.pitch_rad - NADIR_PITCH_RAD) < 1e-12

    def up_normal(self) -> np.ndarray:
        """Ground normal expressed in camera coordinates"""
        return np.array([0.0, -math.cos(self.pitch_rad), -math.sin(self.pitch_rad)])

    def with_offset(self, delta_rad: float) -> "CameraPose":
        return CameraPose(self.pitch_rad + delta_rad)


@dataclass(frozen=True)
class VehiclePrior:
    """Metric size prior of the anchor class (small vehicles by default)"""

    length_m: float = 4.4
    width_m: float = 1.9
    height_m: float = 1.6

    def __post_init__(self):
        dims = (self.length_m, self.width_m, self.height_m)
        if not all(math.isfinite(d) for d in dims):
            raise InvalidPriorError(f"Non-finite vehicle prior: {dims}")
        if not (self.length_m > self.width_m > 0):
            raise InvalidPriorError(
                f"Prior needs length > width > 0 (length={self.length_m}, width={self.width_m})"
            )
        if self.height_m < 0:
            raise InvalidPriorError(f"Prior height must be >= 0, got {self.height_m}")

    def without_height(self) -> "VehiclePrior":
        return replace(self, height_m=0.0)

    def scaled(self, factor: float) -> "VehiclePrior":
        return VehiclePrior(self.length_m * factor, self.width_m * factor, self.height_m * factor)


def _canonical_direction(dx: float, dy: float) -> Tuple[float, float]:
    norm = math.hypot(dx, dy)
    if not math.isfinite(norm) or norm == 0.0:
        raise DegenerateDetectionError(f"Edge direction ({dx}, {dy}) has no orientation")
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        dx, dy = dx / norm, dy / norm
    # A box axis is a line, not a ray: fold it onto x > 0 (or +y when vertical)
    if dx < 0.0 or (dx == 0.0 and dy < 0.0):
        dx, dy = -dx, -dy
    return (dx + 0.0, dy + 0.0)


@dataclass(frozen=True)
class OrientedDetection:
    """One vehicle OBB in image pixels"""

    center_u: float
    center_v: float
    len_pix: float
    wid_pix: float
    edge_dir: Tuple[float, float] = (1.0, 0.0)
    confidence: float = 1.0
    category: str = DEFAULT_CATEGORY

    def __post_init__(self):
        numbers = (self.center_u, self.center_v, self.len_pix, self.wid_pix)
        if not all(math.isfinite(n) for n in numbers):
            raise DegenerateDetectionError(f"Non-finite detection geometry: {numbers}")
        if self.len_pix <= 0 or self.wid_pix <= 0:
            raise DegenerateDetectionError(
                f"Box sides must be positive (len={self.len_pix}, wid={self.wid_pix})"
            )
        if not (0.0 <= self.confidence <= 1.0):
            raise DegenerateDetectionError(f"Confidence {self.confidence} outside [0, 1]")

        dx, dy = float(self.edge_dir[0]), float(self.edge_dir[1])
        if self.wid_pix > self.len_pix:
            # Long side is the vehicle's longitudinal axis
            length, width = self.wid_pix, self.len_pix
            object.__setattr__(self, "len_pix", length)
            object.__setattr__(self, "wid_pix", width)
            dx, dy = -dy, dx
        object.__setattr__(self, "edge_dir", _canonical_direction(dx, dy))

    @classmethod
    def from_corners(
        cls,
        corners: Sequence[Sequence[float]],
        confidence: float = 1.0,
        category: str = DEFAULT_CATEGORY,
    ) -> "OrientedDetection":
        """
        Build a detection from 4 corner points given in winding order.

        Center is the corner centroid; each side length is the mean of two
        opposite edges, so slightly skewed quads from detectors still work.
        """
        pts = np.asarray(corners, dtype=float).reshape(4, 2)
        if not np.all(np.isfinite(pts)):
            raise DegenerateDetectionError("Non-finite corner coordinates")

        edges = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        side_a = (lengths[0] + lengths[2]) / 2.0
        side_b = (lengths[1] + lengths[3]) / 2.0

        # Opposite edges run in opposite directions along a closed quad
        if side_a >= side_b:
            length, width = side_a, side_b
            direction = edges[0] - edges[2]
        else:
            length, width = side_b, side_a
            direction = edges[1] - edges[3]

        center = pts.mean(axis=0)
        return cls(
            center_u=float(center[0]),
            center_v=float(center[1]),
            len_pix=float(length),
            wid_pix=float(width),
            edge_dir=(float(direction[0]), float(direction[1])),
            confidence=float(confidence),
            category=category,
        )

    def corners(self) -> np.ndarray:
        """Corner points (4x2) of the rectangle, in winding order"""
        d = np.array(self.edge_dir)
        n = np.array([-d[1], d[0]])
        c = np.array([self.center_u, self.center_v])
        half_l = 0.5 * self.len_pix * d
        half_w = 0.5 * self.wid_pix * n
        return np.array([c - half_l - half_w, c + half_l - half_w, c + half_l + half_w, c - half_l + half_w])


@dataclass(frozen=True)
class ViewingGeometry:
    alpha_rad: float
    gamma_rad: float

    def __post_init__(self):
        if not (0.0 < self.alpha_rad <= math.pi / 2 + 1e-12):
            raise DegenerateDetectionError(f"Viewing elevation {self.alpha_rad} outside (0, pi/2]")
        if not (0.0 <= self.gamma_rad <= math.pi / 2 + 1e-12):
            raise DegenerateDetectionError(f"Relative orientation {self.gamma_rad} outside [0, pi/2]")

    @property
    def sin_alpha(self) -> float:
        return math.sin(self.alpha_rad)

    @property
    def cos_alpha(self) -> float:
        return math.cos(self.alpha_rad)


@dataclass(frozen=True)
class EffectiveDims:
    l_eff_m: float
    w_eff_m: float
    t_rad_l: float
    t_tan_l: float
    t_rad_w: float
    t_tan_w: float


@dataclass(frozen=True)
class InstanceScale:
    s_len: float
    s_wid: float
    s_fused: float
    detection_index: int = 0


def viewing_elevation(intr: CameraIntrinsics, pose: CameraPose, u: float, v: float) -> float:
    """Angle between the ray through pixel (u, v) and the ground plane"""
    f = intr.focal_length
    if not f > 0:
        raise InvalidIntrinsicsError(f"Degenerate viewing ray: focal length {f}")
    if not intr.contains(u, v):
        raise DegenerateDetectionError(f"Pixel ({u}, {v}) outside the image")

    ray = np.array([u - intr.cx, v - intr.cy, f])
    normal = pose.up_normal()
    # atan2 of (normal component, in-plane component) keeps full precision near 90 degrees
    along = abs(float(ray @ normal))
    across = float(np.linalg.norm(np.cross(ray, normal)))
    alpha = math.atan2(along, across)
    if alpha <= 0.0:
        raise DegenerateDetectionError(f"Ray through ({u}, {v}) never reaches the ground")
    return alpha


def radial_direction(intr: CameraIntrinsics, u: float, v: float) -> Tuple[float, float]:
    du, dv = u - intr.cx, v - intr.cy
    if math.hypot(du, dv) < MIN_RADIAL_NORM_PX:
        return (0.0, 1.0)
    return (du, dv)


def relative_orientation(intr: CameraIntrinsics, det: OrientedDetection) -> float:
    """Angle in [0, pi/2] between the vehicle axis and the radial image direction"""
    rad = np.array(radial_direction(intr, det.center_u, det.center_v))
    edge = np.array(det.edge_dir)
    cos_gamma = abs(float(rad @ edge)) / (float(np.linalg.norm(rad)) * float(np.linalg.norm(edge)))
    return math.acos(min(1.0, cos_gamma))


def viewing_geometry(
    intr: CameraIntrinsics, pose: CameraPose, det: OrientedDetection, planar: bool = False
) -> ViewingGeometry:
    """Per-instance (alpha, gamma); planar inputs (orthophotos) are seen from straight above"""
    if planar:
        alpha = math.pi / 2
    else:
        alpha = viewing_elevation(intr, pose, det.center_u, det.center_v)
    return ViewingGeometry(alpha_rad=alpha, gamma_rad=relative_orientation(intr, det))


def effective_dims(prior: VehiclePrior, geom: ViewingGeometry) -> EffectiveDims:
    sin_a, cos_a = geom.sin_alpha, geom.cos_alpha
    gamma = geom.gamma_rad
    gamma_w = math.pi / 2 - gamma  # width axis is perpendicular to the length axis

    t_rad_l = (prior.length_m * sin_a + prior.height_m * cos_a) * math.cos(gamma)
    t_tan_l = prior.length_m * math.sin(gamma)
    t_rad_w = (prior.width_m * sin_a + prior.height_m * cos_a) * math.cos(gamma_w)
    t_tan_w = prior.width_m * math.sin(gamma_w)

    return EffectiveDims(
        l_eff_m=math.hypot(t_rad_l, t_tan_l),
        w_eff_m=math.hypot(t_rad_w, t_tan_w),
        t_rad_l=t_rad_l,
        t_tan_l=t_tan_l,
        t_rad_w=t_rad_w,
        t_tan_w=t_tan_w,
    )


def _check_pixel_dims(det: OrientedDetection):
    if not (det.len_pix > 0 and det.wid_pix > 0):
        raise DegenerateDetectionError(f"Box sides must be positive (len={det.len_pix}, wid={det.wid_pix})")


def instance_scale(
    det: OrientedDetection, dims: EffectiveDims, geom: ViewingGeometry, detection_index: int = 0
) -> InstanceScale:
    """Nadir-equivalent meters/pixel from both box axes"""
    _check_pixel_dims(det)
    sin_a = geom.sin_alpha
    s_len = dims.l_eff_m * sin_a / det.len_pix
    s_wid = dims.w_eff_m * sin_a / det.wid_pix
    return InstanceScale(s_len=s_len, s_wid=s_wid, s_fused=(s_len + s_wid) / 2.0, detection_index=detection_index)


def naive_instance_scale(det: OrientedDetection, prior: VehiclePrior, detection_index: int = 0) -> InstanceScale:
    """Box edges taken as the vehicle footprint: no angle and no height terms"""
    _check_pixel_dims(det)
    s_len = prior.length_m / det.len_pix
    s_wid = prior.width_m / det.wid_pix
    return InstanceScale(s_len=s_len, s_wid=s_wid, s_fused=(s_len + s_wid) / 2.0, detection_index=detection_index)


def optical_axis_height(prior: VehiclePrior, pose: CameraPose) -> float:
    """
    Vehicle height projected on the optical axis, H_car * |sin(pitch)|.

    Only reported for reference; the effective dimensions use
    H_car * cos(alpha) per instance instead.
    """
    return prior.height_m * abs(math.sin(pose.pitch_rad))
