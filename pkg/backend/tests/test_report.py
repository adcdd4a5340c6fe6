# backend/tests/test_report.py
import json
from pathlib import Path

import pytest

from shared.errors import CropPlanningError, DetectionParseError
from shared.report import (
    REPORT_SCHEMA_VERSION,
    TOP_LEVEL_KEYS,
    build_meta,
    build_report,
    key_structure,
    load_scale_report,
    write_report,
)
from shared.resolution_crop import MapBounds, plan_crops
from shared.scale_pipeline import ScaleEstimator, orthophoto_estimator
from shared.sensitivity import sensitivity_report

SCHEMA_FILE = Path(__file__).parent / "data" / "report_schema.json"


@pytest.fixture
def estimated(intrinsics, nadir_detections):
    estimator = ScaleEstimator(intrinsics)
    return estimator, estimator.estimate(nadir_detections)


class TestBuildReport:

    def test_key_layout_matches_golden_file(self, estimated):
        estimator, result = estimated
        report = build_report(result, build_meta(estimator, source="frame.txt"))
        assert key_structure(report) == json.loads(SCHEMA_FILE.read_text(encoding="utf-8"))

    def test_optional_sections_are_null(self, estimated):
        estimator, result = estimated
        report = build_report(result, build_meta(estimator))
        assert tuple(report) == TOP_LEVEL_KEYS
        assert report["crop_plan"] is None
        assert report["sensitivity"] is None

    def test_all_sections_filled(self, estimated):
        estimator, result = estimated
        plan = plan_crops(result.report, 320, MapBounds(0, 0, 2000, 2000), 0.3)
        sens = sensitivity_report(estimator, result.detections, base=result)
        report = build_report(result, build_meta(estimator), crop_plan=plan, sensitivity=sens)
        assert report["crop_plan"]["n_windows"] == len(plan.windows)
        assert report["sensitivity"]["applicable"] is True

    def test_insufficient_image_has_no_aggregation(self, intrinsics, nadir_detections):
        estimator = ScaleEstimator(intrinsics)
        report = build_report(estimator.estimate(nadir_detections[:2]), build_meta(estimator))
        assert report["aggregation"] is None
        assert report["scale"]["status"] == "insufficient-anchors"
        assert report["scale"]["global_scale"] is None

    def test_instances_flag_inliers(self, estimated):
        estimator, result = estimated
        records = build_report(result, build_meta(estimator))["instances"]
        assert [r["detection_index"] for r in records] == [0, 1, 2, 3, 4]
        assert sum(r["inlier"] for r in records) == result.report.n_inliers


class TestMeta:

    def test_meta_records_the_camera_and_prior(self, estimated):
        estimator, _ = estimated
        meta = build_meta(estimator, provenance={"vehicle_length_m": "flag"}, extra={"format": "dota-obb"})
        assert meta["schema_version"] == REPORT_SCHEMA_VERSION
        assert meta["intrinsics"]["focal_px"] == 1000.0
        assert meta["prior"]["source"]["length_m"] == "flag"
        assert meta["prior"]["source"]["width_m"] == "default"
        assert meta["discrepancies"]["optical_axis_height_m"] == pytest.approx(1.6)
        assert meta["format"] == "dota-obb"
        assert meta["height_term_disabled"] is False

    def test_orthophoto_meta(self, intrinsics):
        meta = build_meta(orthophoto_estimator(intrinsics))
        assert meta["orthophoto_mode"] is True
        assert meta["height_term_disabled"] is True


class TestReportFiles:

    def test_written_report_loads_back(self, tmp_path, estimated):
        estimator, result = estimated
        path = write_report(build_report(result, build_meta(estimator)), tmp_path / "out" / "frame.scale.json")
        loaded = load_scale_report(path)
        assert loaded.ok
        assert loaded.global_scale == result.report.global_scale
        assert loaded.pitch_rad == pytest.approx(result.report.pitch_rad)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.scale.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(DetectionParseError):
            load_scale_report(path)

    def test_undecodable_report(self, tmp_path):
        path = tmp_path / "binary.scale.json"
        path.write_bytes(b"\xff\xfe{}")
        with pytest.raises(DetectionParseError) as exc_info:
            load_scale_report(path)
        assert exc_info.value.source == "binary.scale.json"

    def test_missing_scale_section(self, tmp_path):
        path = tmp_path / "empty.scale.json"
        path.write_text(json.dumps({"meta": {}}), encoding="utf-8")
        with pytest.raises(DetectionParseError):
            load_scale_report(path)

    def test_malformed_scale_section(self, tmp_path):
        path = tmp_path / "odd.scale.json"
        path.write_text(json.dumps({"scale": {"status": "ok"}}), encoding="utf-8")
        with pytest.raises(CropPlanningError):
            load_scale_report(path)

    def test_non_finite_numbers_are_refused(self, tmp_path):
        with pytest.raises(ValueError):
            write_report({"scale": {"global_scale": float("nan")}}, tmp_path / "nan.json")
