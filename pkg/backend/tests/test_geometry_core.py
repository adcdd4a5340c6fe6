# backend/tests/test_geometry_core.py
import math

import numpy as np
import pytest

from shared.errors import (
    DegenerateDetectionError,
    InvalidIntrinsicsError,
    InvalidPoseError,
    InvalidPriorError,
)
from shared.geometry_core import (
    NADIR_PITCH_RAD,
    CameraIntrinsics,
    CameraPose,
    OrientedDetection,
    VehiclePrior,
    ViewingGeometry,
    effective_dims,
    instance_scale,
    naive_instance_scale,
    optical_axis_height,
    radial_direction,
    relative_orientation,
    viewing_elevation,
    viewing_geometry,
)


class TestCameraModel:

    def test_from_focal_centers_principal_point(self):
        intr = CameraIntrinsics.from_focal(1000.0, 320, 240)
        assert (intr.cx, intr.cy) == (160.0, 120.0)
        assert intr.focal_length == 1000.0

    @pytest.mark.parametrize("kwargs", [
        {"fx": 0.0},
        {"fy": -5.0},
        {"image_width": 0},
        {"cx": 400.0},
        {"cy": float("nan")},
    ])
    def test_invalid_intrinsics_rejected(self, kwargs):
        """Bad focal lengths, sizes or principal points raise InvalidIntrinsicsError"""
        values = {"fx": 1000.0, "fy": 1000.0, "cx": 160.0, "cy": 120.0, "image_width": 320, "image_height": 240}
        values.update(kwargs)
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(**values)

    def test_focal_offset_moves_effective_focal(self, intrinsics):
        assert intrinsics.with_focal_offset(2.5).focal_length == pytest.approx(1002.5)

    def test_nadir_from_degrees_is_exact(self):
        pose = CameraPose.from_degrees(-90.0)
        assert pose.pitch_rad == NADIR_PITCH_RAD
        assert pose.is_nadir

    @pytest.mark.parametrize("pitch", [0.0, 0.3, -math.pi, float("inf")])
    def test_invalid_pitch_rejected(self, pitch):
        with pytest.raises(InvalidPoseError):
            CameraPose(pitch)

    def test_up_normal_at_nadir_points_along_optical_axis(self, nadir_pose):
        np.testing.assert_allclose(nadir_pose.up_normal(), [0.0, 0.0, 1.0], atol=1e-15)


class TestVehiclePrior:

    def test_defaults(self, prior):
        assert (prior.length_m, prior.width_m, prior.height_m) == (4.4, 1.9, 1.6)

    @pytest.mark.parametrize("dims", [(1.9, 4.4, 1.6), (4.4, 0.0, 1.6), (4.4, 1.9, -1.0)])
    def test_invalid_prior_rejected(self, dims):
        with pytest.raises(InvalidPriorError):
            VehiclePrior(*dims)

    def test_without_height(self, prior):
        flat = prior.without_height()
        assert flat.height_m == 0.0
        assert flat.length_m == prior.length_m

    def test_optical_axis_height(self, prior, nadir_pose):
        assert optical_axis_height(prior, nadir_pose) == pytest.approx(1.6)
        assert optical_axis_height(prior, CameraPose.from_degrees(-30.0)) == pytest.approx(0.8)


class TestOrientedDetection:

    def test_long_side_becomes_length(self):
        det = OrientedDetection(10.0, 10.0, 5.0, 12.0, (1.0, 0.0))
        assert det.len_pix == 12.0
        assert det.wid_pix == 5.0
        assert det.edge_dir == (0.0, 1.0)

    def test_direction_is_folded_and_normalized(self):
        assert OrientedDetection(1, 1, 4, 2, (-1.0, 0.0)).edge_dir == (1.0, 0.0)
        assert OrientedDetection(1, 1, 4, 2, (3.0, 4.0)).edge_dir == pytest.approx((0.6, 0.8))
        assert OrientedDetection(1, 1, 4, 2, (0.0, -2.0)).edge_dir == (0.0, 1.0)

    @pytest.mark.parametrize("kwargs", [
        {"len_pix": 0.0},
        {"wid_pix": -1.0},
        {"center_u": float("nan")},
        {"edge_dir": (0.0, 0.0)},
        {"confidence": 1.5},
    ])
    def test_degenerate_boxes_rejected(self, kwargs):
        values = {"center_u": 5.0, "center_v": 5.0, "len_pix": 4.0, "wid_pix": 2.0}
        values.update(kwargs)
        with pytest.raises(DegenerateDetectionError):
            OrientedDetection(**values)

    def test_from_corners_axis_aligned(self):
        det = OrientedDetection.from_corners([[0, 0], [44, 0], [44, 19], [0, 19]], confidence=0.9)
        assert (det.center_u, det.center_v) == (22.0, 9.5)
        assert (det.len_pix, det.wid_pix) == (44.0, 19.0)
        assert det.edge_dir == (1.0, 0.0)
        assert det.confidence == 0.9

    def test_from_corners_ignores_winding(self):
        forward = OrientedDetection.from_corners([[0, 0], [44, 0], [44, 19], [0, 19]])
        reverse = OrientedDetection.from_corners([[0, 0], [0, 19], [44, 19], [44, 0]])
        assert forward == reverse

    def test_corners_rebuild_the_box(self):
        det = OrientedDetection(100.0, 80.0, 30.0, 12.0, (math.cos(0.4), math.sin(0.4)))
        rebuilt = OrientedDetection.from_corners(det.corners())
        assert rebuilt.center_u == pytest.approx(det.center_u)
        assert rebuilt.center_v == pytest.approx(det.center_v)
        assert rebuilt.len_pix == pytest.approx(det.len_pix)
        assert rebuilt.wid_pix == pytest.approx(det.wid_pix)
        assert rebuilt.edge_dir == pytest.approx(det.edge_dir)


class TestViewingGeometry:

    def test_principal_point_at_nadir_is_ninety_degrees(self, intrinsics, nadir_pose):
        alpha = viewing_elevation(intrinsics, nadir_pose, intrinsics.cx, intrinsics.cy)
        assert alpha == pytest.approx(math.pi / 2, abs=1e-12)

    def test_off_center_at_nadir(self, intrinsics, nadir_pose):
        alpha = viewing_elevation(intrinsics, nadir_pose, intrinsics.cx + 120.0, intrinsics.cy - 50.0)
        assert alpha == pytest.approx(math.atan2(1000.0, math.hypot(120.0, 50.0)), rel=1e-12)

    @pytest.mark.parametrize("pitch_deg", [-75.0, -60.0, -45.0])
    def test_principal_point_sees_the_pitch(self, intrinsics, pitch_deg):
        pose = CameraPose.from_degrees(pitch_deg)
        alpha = viewing_elevation(intrinsics, pose, intrinsics.cx, intrinsics.cy)
        assert alpha == pytest.approx(math.radians(-pitch_deg), rel=1e-12)

    def test_pixel_outside_image_is_degenerate(self, intrinsics, nadir_pose):
        with pytest.raises(DegenerateDetectionError):
            viewing_elevation(intrinsics, nadir_pose, -1.0, 10.0)

    def test_radial_direction_falls_back_near_center(self, intrinsics):
        assert radial_direction(intrinsics, intrinsics.cx + 0.3, intrinsics.cy) == (0.0, 1.0)
        assert radial_direction(intrinsics, intrinsics.cx + 30.0, intrinsics.cy) == (30.0, 0.0)

    def test_relative_orientation(self, intrinsics):
        along = OrientedDetection(intrinsics.cx + 100.0, intrinsics.cy, 20.0, 8.0, (1.0, 0.0))
        across = OrientedDetection(intrinsics.cx + 100.0, intrinsics.cy, 20.0, 8.0, (0.0, 1.0))
        assert relative_orientation(intrinsics, along) == pytest.approx(0.0, abs=1e-12)
        assert relative_orientation(intrinsics, across) == pytest.approx(math.pi / 2)

    def test_planar_geometry_looks_straight_down(self, intrinsics, nadir_pose):
        det = OrientedDetection(20.0, 20.0, 20.0, 8.0)
        assert viewing_geometry(intrinsics, nadir_pose, det, planar=True).alpha_rad == math.pi / 2


class TestEffectiveDims:

    def test_nadir_footprint(self, prior):
        dims = effective_dims(prior, ViewingGeometry(math.pi / 2, 0.0))
        assert dims.l_eff_m == pytest.approx(prior.length_m, rel=1e-12)
        assert dims.w_eff_m == pytest.approx(prior.width_m, rel=1e-12)

    def test_oblique_radial_vehicle_gains_height(self, prior):
        alpha = math.radians(60.0)
        dims = effective_dims(prior, ViewingGeometry(alpha, 0.0))
        expected = prior.length_m * math.sin(alpha) + prior.height_m * math.cos(alpha)
        assert dims.t_rad_l == pytest.approx(expected)
        assert dims.t_tan_l == pytest.approx(0.0, abs=1e-15)
        assert dims.l_eff_m == pytest.approx(expected)
        # the width axis is tangential here and sees no height
        assert dims.w_eff_m == pytest.approx(prior.width_m, rel=1e-9)

    def test_tangential_vehicle_keeps_length(self, prior):
        dims = effective_dims(prior, ViewingGeometry(math.radians(50.0), math.pi / 2))
        assert dims.l_eff_m == pytest.approx(prior.length_m, rel=1e-9)


class TestInstanceScale:

    def test_nadir_box_gives_exact_scale(self, prior):
        s = 0.125
        det = OrientedDetection(160.0, 120.0, prior.length_m / s, prior.width_m / s)
        geom = ViewingGeometry(math.pi / 2, 0.0)
        scale = instance_scale(det, effective_dims(prior, geom), geom, detection_index=3)
        assert scale.s_len == pytest.approx(s, rel=1e-12)
        assert scale.s_wid == pytest.approx(s, rel=1e-12)
        assert scale.s_fused == pytest.approx(s, rel=1e-12)
        assert scale.detection_index == 3

    def test_naive_scale_is_edge_ratio(self, prior):
        det = OrientedDetection(10.0, 10.0, 44.0, 19.0)
        naive = naive_instance_scale(det, prior)
        assert naive.s_len == pytest.approx(0.1)
        assert naive.s_wid == pytest.approx(0.1)
        assert naive.s_fused == pytest.approx(0.1)


def _random_detection(rng, intr, full_circle=False):
    u = rng.uniform(1.0, intr.image_width - 1.0)
    v = rng.uniform(1.0, intr.image_height - 1.0)
    length = rng.uniform(10.0, 60.0)
    width = rng.uniform(4.0, length)
    phi = rng.uniform(0.0, 2 * math.pi if full_circle else math.pi)
    return OrientedDetection(u, v, length, width, edge_dir=(math.cos(phi), math.sin(phi)))


class TestGeometryProperties:

    @pytest.mark.parametrize("seed", range(5))
    def test_nadir_center_matches_naive_for_any_heading(self, seed, intrinsics, nadir_pose, prior):
        rng = np.random.default_rng(seed)
        for phi in rng.uniform(0.0, math.pi, size=20):
            det = OrientedDetection(intrinsics.cx, intrinsics.cy, 44.0, 19.0, edge_dir=(math.cos(phi), math.sin(phi)))
            geom = viewing_geometry(intrinsics, nadir_pose, det)
            decoupled = instance_scale(det, effective_dims(prior, geom), geom)
            naive = naive_instance_scale(det, prior)
            assert decoupled.s_len == pytest.approx(naive.s_len, rel=1e-12)
            assert decoupled.s_wid == pytest.approx(naive.s_wid, rel=1e-12)
            assert decoupled.s_fused == pytest.approx(naive.s_fused, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_planar_input_matches_naive_anywhere(self, seed, intrinsics, nadir_pose, prior):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            det = _random_detection(rng, intrinsics)
            geom = viewing_geometry(intrinsics, nadir_pose, det, planar=True)
            decoupled = instance_scale(det, effective_dims(prior, geom), geom)
            assert decoupled.s_fused == pytest.approx(naive_instance_scale(det, prior).s_fused, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_straight_down_view_ignores_orientation(self, seed, prior):
        rng = np.random.default_rng(seed)
        for gamma in rng.uniform(0.0, math.pi / 2, size=20):
            dims = effective_dims(prior, ViewingGeometry(math.pi / 2, float(gamma)))
            assert dims.l_eff_m == pytest.approx(prior.length_m, rel=1e-12)
            assert dims.w_eff_m == pytest.approx(prior.width_m, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_taller_vehicle_never_shrinks(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            geom = ViewingGeometry(rng.uniform(0.05, math.pi / 2), rng.uniform(0.0, math.pi / 2))
            low, high = np.sort(rng.uniform(0.0, 3.0, size=2))
            a = effective_dims(VehiclePrior(4.4, 1.9, float(low)), geom)
            b = effective_dims(VehiclePrior(4.4, 1.9, float(high)), geom)
            assert b.l_eff_m >= a.l_eff_m * (1 - 1e-12)
            assert b.w_eff_m >= a.w_eff_m * (1 - 1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_doubling_the_prior_doubles_the_scale(self, seed, intrinsics, prior):
        rng = np.random.default_rng(seed)
        pose = CameraPose.from_degrees(-60.0)
        doubled = prior.scaled(2.0)
        for _ in range(20):
            det = _random_detection(rng, intrinsics)
            geom = viewing_geometry(intrinsics, pose, det)
            base = instance_scale(det, effective_dims(prior, geom), geom)
            twice = instance_scale(det, effective_dims(doubled, geom), geom)
            assert twice.s_fused == pytest.approx(2.0 * base.s_fused, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_relative_orientation_stays_in_quarter_turn(self, seed, intrinsics):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            gamma = relative_orientation(intrinsics, _random_detection(rng, intrinsics, full_circle=True))
            assert 0.0 <= gamma <= math.pi / 2
