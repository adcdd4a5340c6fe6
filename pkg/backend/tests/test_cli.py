# backend/tests/test_cli.py
import json
import logging

import pytest
from pythonjsonlogger import jsonlogger

from cli import build_parser, event_from_args, main
from config import LOG_HANDLER_NAME
from shared.detection_io import format_dota_obb
from shared.geometry_core import NADIR_PITCH_RAD
from shared.synth_oracle import DEFAULT_INTRINSICS, SceneSpec, VehiclePlacement, generate_scene

pytestmark = pytest.mark.usefixtures("clean_environment")


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def colocated_file(tmp_path):
    """Five identical prior-sized vehicles under the principal point of a nadir camera"""
    spec = SceneSpec(150.0, NADIR_PITCH_RAD, DEFAULT_INTRINSICS, vehicles=(VehiclePlacement(0.0, 0.0, 0.0),) * 5)
    path = tmp_path / "colocated.txt"
    path.write_text(format_dota_obb(generate_scene(spec).detections), encoding="utf-8")
    return path


class TestArguments:

    def test_flags_become_overrides(self):
        args = build_parser().parse_args(["estimate", "a.txt", "--pitch-deg", "-75", "--orthophoto", "--naive"])
        event = event_from_args(args)
        assert event["command"] == "estimate"
        params = event["parameters"]
        assert params["overrides"] == {"pitch_deg": -75.0, "orthophoto_mode": True}
        assert params["detections"] == "a.txt"
        assert params["naive"] is True
        assert "pitch_deg" not in params

    def test_unset_flags_are_dropped(self):
        event = event_from_args(build_parser().parse_args(["sensitivity"]))
        assert event["parameters"]["overrides"] == {}
        assert "detections" not in event["parameters"]

    def test_negative_pitches_parse(self):
        args = build_parser().parse_args(["evaluate", "--pitches", "-90", "-75", "-60"])
        assert args.pitches_deg == [-90.0, -75.0, -60.0]

    def test_help_lists_examples(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["--help"])
        assert exc_info.value.code == 0
        assert "Examples:" in capsys.readouterr().out


class TestEndToEnd:

    def test_synth_then_estimate_a_directory(self, tmp_path, capsys):
        out = tmp_path / "scenes"
        assert main(["synth", "--output-dir", str(out), "--count", "100", "--quiet"]) == 0
        assert len(list(out.glob("*.txt"))) == 100

        code, summary = _run(capsys, "estimate", str(out), "--workers", "4")
        assert code == 0
        assert summary["n_files"] == 100
        assert summary["n_ok"] == 100
        assert len(list(out.glob("*.scale.json"))) == 100

    def test_colocated_nadir_vehicles_are_exact(self, colocated_file, capsys):
        code, report = _run(capsys, "estimate", str(colocated_file))
        assert code == 0
        scale = report["scale"]
        assert scale["global_scale"] == pytest.approx(0.15, abs=1e-6)
        assert scale["altitude_m"] == pytest.approx(150.0, rel=1e-6)
        assert scale["n_inliers"] == 5

    def test_orthophoto_resolution(self, tmp_path, capsys):
        out = tmp_path / "ortho"
        assert main(["synth", "--output-dir", str(out), "--orthographic", "--quiet"]) == 0
        code, report = _run(capsys, "estimate", str(out / "synth_s0000_p-90.txt"), "--orthophoto")
        assert code == 0
        assert report["scale"]["avg_resolution"] == pytest.approx(0.15, rel=1e-9)
        assert report["scale"]["altitude_m"] is None
        assert report["meta"]["height_term_disabled"] is True

    def test_plan_crops_from_written_report(self, colocated_file, tmp_path, capsys):
        report = tmp_path / "colocated.scale.json"
        assert main(["estimate", str(colocated_file), "--output", str(report), "--quiet"]) == 0
        code, body = _run(
            capsys, "plan-crops", str(report), "--map-width", "1000", "--map-height", "1000", "--gsd-sat", "0.3"
        )
        assert code == 0
        # 0.15 m/px over 320 px is 48 m, or 160 px at 0.3 m/px
        assert body["crop_plan"]["crop_size_px"] == pytest.approx(160.0, rel=1e-6)
        assert body["crop_plan"]["stride_px"] == 80

    def test_evaluate(self, capsys):
        code, body = _run(capsys, "evaluate", "--count", "4", "--pitches", "-90", "-75")
        assert code == 0
        assert len(body["runs"]) == 2


class TestExitCodes:

    def test_insufficient_anchors(self, tmp_path, dota_line, capsys):
        path = tmp_path / "few.txt"
        path.write_text(dota_line + "\n", encoding="utf-8")
        assert _run(capsys, "estimate", str(path))[0] == 3

    def test_parse_error(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("0 0 44 0 nan 19 0 19 small-vehicle 0.9\n", encoding="utf-8")
        code, body = _run(capsys, "estimate", str(path))
        assert code == 4
        assert "line 1" in body["error"]

    def test_undecodable_detection_file(self, tmp_path, capsys):
        path = tmp_path / "binary.txt"
        path.write_bytes(b"\xff\xfe\x00\x01")
        code, body = _run(capsys, "estimate", str(path))
        assert code == 4
        assert "binary.txt" in body["error"]

    def test_config_error(self, colocated_file, capsys):
        assert _run(capsys, "estimate", str(colocated_file), "--conf-threshold", "2")[0] == 5

    def test_io_error(self, tmp_path, capsys):
        assert _run(capsys, "estimate", str(tmp_path / "absent.txt"))[0] == 6

    def test_crop_error(self, colocated_file, tmp_path, capsys):
        report = tmp_path / "r.scale.json"
        main(["estimate", str(colocated_file), "--output", str(report), "--quiet"])
        assert _run(capsys, "plan-crops", str(report), "--map-width", "100", "--map-height", "100")[0] == 7


class TestLogging:

    def test_json_logs(self, colocated_file):
        main(["estimate", str(colocated_file), "--log-json", "--quiet"])
        ours = [h for h in logging.getLogger().handlers if h.get_name() == LOG_HANDLER_NAME]
        assert len(ours) == 1
        assert isinstance(ours[0].formatter, jsonlogger.JsonFormatter)
