# backend/shared/synth_oracle.py
"""
Synthetic Scene Oracle
======================
Exact forward model used to validate the estimator.

Vehicles are 3D cuboids standing on a flat ground plane (z = 0). A
pitch-only pinhole camera looks at them from altitude; the 8 projected
corners of each cuboid are wrapped in a minimum-area rectangle, which is
what an ideal oriented-box detector would return.

Camera frame (phi = -pitch): image x points to world -X, and the camera's
y/z axes are tilted about world X so that the ground normal seen by the
camera equals the one used by the viewing-elevation formula.

Ground truth: the camera sits altitude_m above a reference plane that is
reference_height_m above the ground (the roof plane by default), so
s_true = altitude_m / f.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull

from shared.errors import DegenerateDetectionError, InvalidPoseError, ScaleRecoveryError
from shared.geometry_core import (
    DEFAULT_CATEGORY,
    CameraIntrinsics,
    CameraPose,
    OrientedDetection,
    VehiclePrior,
)

logger = logging.getLogger(__name__)

DEFAULT_INTRINSICS = CameraIntrinsics.from_focal(1000.0, 320, 240)
DEFAULT_ALTITUDE_M = 150.0
DEFAULT_MARGIN_PX = 30.0
DEFAULT_REFERENCE_HEIGHT_M = 1.6
OUTLIER_SCALE_RANGE = (2.0, 4.0)
AREA_TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VehiclePlacement:
    x_m: float
    y_m: float
    yaw_rad: float
    dims: VehiclePrior = field(default_factory=VehiclePrior)


@dataclass(frozen=True)
class SceneSpec:
    altitude_m: float
    pitch_rad: float
    intrinsics: CameraIntrinsics
    vehicles: Tuple[VehiclePlacement, ...] = ()
    rng_seed: int = 0
    dim_noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_confidence_range: Tuple[float, float] = (1.0, 1.0)
    reference_height_m: float = DEFAULT_REFERENCE_HEIGHT_M
    orthographic: bool = False
    category: str = DEFAULT_CATEGORY

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if not self.altitude_m > 0:
            raise InvalidPoseError(f"Scene altitude must be positive, got {self.altitude_m}")
        if self.reference_height_m < 0:
            raise InvalidPoseError(f"Reference height must be >= 0, got {self.reference_height_m}")
        if self.dim_noise_sigma < 0:
            raise ScaleRecoveryError(f"dim_noise_sigma must be >= 0, got {self.dim_noise_sigma}")
        if not (0.0 <= self.outlier_fraction <= 1.0):
            raise ScaleRecoveryError(f"outlier_fraction must lie in [0, 1], got {self.outlier_fraction}")
        low, high = self.outlier_confidence_range
        if not (0.0 <= low <= high <= 1.0):
            raise ScaleRecoveryError(f"Invalid outlier confidence range {self.outlier_confidence_range}")
        pose = CameraPose(self.pitch_rad)
        if self.orthographic and not pose.is_nadir:
            raise InvalidPoseError("Orthographic scenes are nadir by construction")

    @property
    def pose(self) -> CameraPose:
        return CameraPose(self.pitch_rad)

    @property
    def s_true(self) -> float:
        return self.altitude_m / self.intrinsics.focal_length

    @property
    def camera_height_m(self) -> float:
        return self.altitude_m + self.reference_height_m


@dataclass(frozen=True)
class GroundTruth:
    s_true: float
    altitude_m: float
    height_above_ground_m: float
    reference_height_m: float
    pitch_rad: float
    focal_px: float
    avg_resolution: float
    orthographic: bool = False

    def to_dict(self) -> dict:
        return {
            "s_true": self.s_true,
            "altitude_m": self.altitude_m,
            "height_above_ground_m": self.height_above_ground_m,
            "reference_height_m": self.reference_height_m,
            "pitch_deg": math.degrees(self.pitch_rad),
            "focal_px": self.focal_px,
            "avg_resolution": self.avg_resolution,
            "orthographic": self.orthographic,
        }


@dataclass
class SyntheticScene:
    spec: SceneSpec
    detections: List[OrientedDetection]
    truth: GroundTruth
    outlier_indices: List[int] = field(default_factory=list)
    n_skipped: int = 0

    @property
    def seed(self) -> int:
        return self.spec.rng_seed


class PinholeCamera:
    """Pitch-only pinhole camera above the ground plane"""

    def __init__(self, intrinsics: CameraIntrinsics, pitch_rad: float, height_m: float):
        self.intrinsics = intrinsics
        self.pitch_rad = pitch_rad
        phi = -pitch_rad
        self.R = np.array(
            [
                [-1.0, 0.0, 0.0],
                [0.0, math.sin(phi), math.cos(phi)],
                [0.0, math.cos(phi), -math.sin(phi)],
            ]
        )
        self.center = np.array([0.0, 0.0, height_m])

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World points (N, 3) -> pixel coordinates (N, 2) and camera depths (N,)"""
        cam = (np.asarray(points, dtype=float) - self.center) @ self.R.T
        depth = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.intrinsics.fx * cam[:, 0] / depth + self.intrinsics.cx
            v = self.intrinsics.fy * cam[:, 1] / depth + self.intrinsics.cy
        return np.column_stack([u, v]), depth

    def back_project(self, u: float, v: float) -> Tuple[float, float]:
        """Ground-plane point seen at pixel (u, v)"""
        ray = np.array(
            [(u - self.intrinsics.cx) / self.intrinsics.fx, (v - self.intrinsics.cy) / self.intrinsics.fy, 1.0]
        )
        direction = self.R.T @ ray
        if direction[2] >= 0:
            raise DegenerateDetectionError(f"Pixel ({u}, {v}) looks above the horizon")
        t = -self.center[2] / direction[2]
        ground = self.center + t * direction
        return float(ground[0]), float(ground[1])


class OrthographicCamera:
    """Orthophoto: ground coordinates mapped at a constant scale, heights ignored"""

    def __init__(self, intrinsics: CameraIntrinsics, scale_m_per_px: float):
        self.intrinsics = intrinsics
        self.scale = scale_m_per_px

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)
        u = self.intrinsics.cx - pts[:, 0] / self.scale
        v = self.intrinsics.cy + pts[:, 1] / self.scale
        return np.column_stack([u, v]), np.ones(len(pts))

    def back_project(self, u: float, v: float) -> Tuple[float, float]:
        return (self.intrinsics.cx - u) * self.scale, (v - self.intrinsics.cy) * self.scale


def camera_for(scene: SceneSpec):
    if scene.orthographic:
        return OrthographicCamera(scene.intrinsics, scene.s_true)
    return PinholeCamera(scene.intrinsics, scene.pitch_rad, scene.camera_height_m)


def ground_truth(scene: SceneSpec) -> GroundTruth:
    return GroundTruth(
        s_true=scene.s_true,
        altitude_m=scene.altitude_m,
        height_above_ground_m=scene.camera_height_m,
        reference_height_m=scene.reference_height_m,
        pitch_rad=scene.pitch_rad,
        focal_px=scene.intrinsics.focal_length,
        avg_resolution=scene.s_true / abs(math.sin(scene.pitch_rad)),
        orthographic=scene.orthographic,
    )


def cuboid_corners(x_m: float, y_m: float, yaw_rad: float, length_m: float, width_m: float, height_m: float):
    """8 world corners: ground face first, then roof face"""
    axis = np.array([math.cos(yaw_rad), math.sin(yaw_rad), 0.0])
    side = np.array([-math.sin(yaw_rad), math.cos(yaw_rad), 0.0])
    base = np.array([x_m, y_m, 0.0])
    corners = []
    for z in (0.0, height_m):
        for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            corners.append(base + a * 0.5 * length_m * axis + b * 0.5 * width_m * side + np.array([0.0, 0.0, z]))
    return np.array(corners)


def minimum_area_rectangle(points: np.ndarray, preferred_axis: Optional[np.ndarray] = None):
    """
    Rotating-calipers minimum-area rectangle of a 2D point set.

    Returns (center, length, width, direction) with direction along the long
    side. Rectangles tied in area (within 1e-9 relative) are resolved in favor
    of the one whose long side is closest to preferred_axis.
    """
    pts = np.asarray(points, dtype=float)
    try:
        hull = pts[ConvexHull(pts).vertices]
    except (RuntimeError, ValueError) as e:
        raise DegenerateDetectionError(f"Projected points span no area: {e}") from e

    if preferred_axis is not None:
        preferred_axis = np.asarray(preferred_axis, dtype=float)
        preferred_axis = preferred_axis / np.linalg.norm(preferred_axis)

    candidates = []
    edges = np.roll(hull, -1, axis=0) - hull
    for edge in edges:
        norm = math.hypot(edge[0], edge[1])
        if norm == 0.0:
            continue
        d = edge / norm
        n = np.array([-d[1], d[0]])
        along, across = hull @ d, hull @ n
        extent_d = along.max() - along.min()
        extent_n = across.max() - across.min()
        center = d * (along.max() + along.min()) / 2.0 + n * (across.max() + across.min()) / 2.0
        if extent_d >= extent_n:
            candidates.append((extent_d * extent_n, center, extent_d, extent_n, d))
        else:
            candidates.append((extent_d * extent_n, center, extent_n, extent_d, n))

    best_area = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= best_area * (1.0 + AREA_TIE_TOLERANCE)]
    if preferred_axis is not None:
        chosen = max(tied, key=lambda c: abs(float(c[4] @ preferred_axis)))
    else:
        chosen = min(tied, key=lambda c: c[0])
    _, center, length, width, direction = chosen
    return center, float(length), float(width), direction


def project_cuboid(
    scene: SceneSpec, vehicle: VehiclePlacement, dims: Optional[Tuple[float, float, float]] = None, camera=None
) -> Optional[OrientedDetection]:
    """Oriented box of one projected vehicle, or None when it is not fully visible"""
    camera = camera or camera_for(scene)
    length, width, height = dims or (vehicle.dims.length_m, vehicle.dims.width_m, vehicle.dims.height_m)
    corners = cuboid_corners(vehicle.x_m, vehicle.y_m, vehicle.yaw_rad, length, width, height)
    pixels, depth = camera.project(corners)

    if np.any(depth <= 0):
        logger.debug(f"[SYNTH] Vehicle at ({vehicle.x_m:.2f}, {vehicle.y_m:.2f}) is behind the camera")
        return None
    intr = scene.intrinsics
    inside = (
        (pixels[:, 0] >= 0)
        & (pixels[:, 0] <= intr.image_width)
        & (pixels[:, 1] >= 0)
        & (pixels[:, 1] <= intr.image_height)
    )
    if not np.all(inside):
        logger.debug(f"[SYNTH] Vehicle at ({vehicle.x_m:.2f}, {vehicle.y_m:.2f}) leaves the frame")
        return None

    axis_ends = np.array(
        [
            [vehicle.x_m - math.cos(vehicle.yaw_rad), vehicle.y_m - math.sin(vehicle.yaw_rad), 0.0],
            [vehicle.x_m + math.cos(vehicle.yaw_rad), vehicle.y_m + math.sin(vehicle.yaw_rad), 0.0],
        ]
    )
    axis_px, _ = camera.project(axis_ends)
    center, box_len, box_wid, direction = minimum_area_rectangle(pixels, axis_px[1] - axis_px[0])
    return OrientedDetection(
        center_u=float(center[0]),
        center_v=float(center[1]),
        len_pix=box_len,
        wid_pix=box_wid,
        edge_dir=(float(direction[0]), float(direction[1])),
        confidence=1.0,
        category=scene.category,
    )


def _streams(seed: int) -> List[np.random.Generator]:
    """Independent generators for placement and for noise/outliers"""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]


def random_scene(
    seed: int,
    n_vehicles: int = 20,
    altitude_m: float = DEFAULT_ALTITUDE_M,
    pitch_deg: float = -90.0,
    intrinsics: Optional[CameraIntrinsics] = None,
    margin_px: float = DEFAULT_MARGIN_PX,
    dims: Optional[VehiclePrior] = None,
    **scene_kwargs,
) -> SceneSpec:
    """Vehicles placed uniformly over the frame (inset by margin_px) with yaw in [0, pi)"""
    intrinsics = intrinsics or DEFAULT_INTRINSICS
    dims = dims or VehiclePrior()
    pose = CameraPose.from_degrees(pitch_deg)
    spec = SceneSpec(
        altitude_m=altitude_m,
        pitch_rad=pose.pitch_rad,
        intrinsics=intrinsics,
        rng_seed=seed,
        **scene_kwargs,
    )
    if intrinsics.image_width <= 2 * margin_px or intrinsics.image_height <= 2 * margin_px:
        raise ScaleRecoveryError(f"Margin {margin_px} px leaves no room in the frame")

    rng = _streams(seed)[0]
    camera = camera_for(spec)
    vehicles = []
    for _ in range(n_vehicles):
        u = margin_px + rng.random() * (intrinsics.image_width - 2 * margin_px)
        v = margin_px + rng.random() * (intrinsics.image_height - 2 * margin_px)
        yaw = rng.random() * math.pi
        x_m, y_m = camera.back_project(u, v)
        vehicles.append(VehiclePlacement(x_m, y_m, yaw, dims))
    return replace(spec, vehicles=tuple(vehicles))


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def generate_scene(scene: SceneSpec) -> SyntheticScene:
    """Deterministic detections and ground truth for a scene"""
    rng = _streams(scene.rng_seed)[1]
    camera = camera_for(scene)

    detections: List[OrientedDetection] = []
    skipped = 0
    for vehicle in scene.vehicles:
        dims = (vehicle.dims.length_m, vehicle.dims.width_m, vehicle.dims.height_m)
        if scene.dim_noise_sigma > 0:
            factors = np.exp(scene.dim_noise_sigma * rng.standard_normal(3))
            dims = tuple(float(d * k) for d, k in zip(dims, factors))
        try:
            det = project_cuboid(scene, vehicle, dims=dims, camera=camera)
        except DegenerateDetectionError as e:
            logger.debug(f"[SYNTH] Dropping degenerate projection: {e}")
            det = None
        if det is None:
            skipped += 1
            continue
        detections.append(det)

    outlier_indices: List[int] = []
    n_outliers = _round_half_up(scene.outlier_fraction * len(detections))
    if n_outliers:
        outlier_indices = sorted(int(i) for i in rng.choice(len(detections), size=n_outliers, replace=False))
        low, high = scene.outlier_confidence_range
        for i in outlier_indices:
            factor = rng.uniform(*OUTLIER_SCALE_RANGE)
            confidence = float(rng.uniform(low, high)) if high > low else low
            det = detections[i]
            detections[i] = replace(
                det, len_pix=det.len_pix * factor, wid_pix=det.wid_pix * factor, confidence=confidence
            )

    if skipped:
        logger.info(f"[SYNTH] Seed {scene.rng_seed}: {skipped} of {len(scene.vehicles)} vehicles not fully visible")
    return SyntheticScene(
        spec=scene,
        detections=detections,
        truth=ground_truth(scene),
        outlier_indices=outlier_indices,
        n_skipped=skipped,
    )


def generate_batch(
    seeds: Sequence[int], workers: int = 1, **scene_kwargs
) -> List[SyntheticScene]:
    """Random scenes for each seed; order follows seeds"""

    def build(seed: int) -> SyntheticScene:
        return generate_scene(random_scene(seed, **scene_kwargs))

    if workers <= 1:
        return [build(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(build, seeds))
