#!/usr/bin/env python3
"""
Command-line entry point for UAV scale recovery from vehicle boxes.

Each subcommand turns its flags into a handler event and exits with the
handler's exit code (0 ok, 3 insufficient anchors, 4 parse error,
5 configuration error, 6 file error, 7 crop planning error, 1 internal).
"""
import argparse
import json
import sys
from typing import Callable, Dict, List, Optional

from config import load_run_config, setup_logging
from handlers.estimate.main import handler as estimate_handler
from handlers.evaluate.main import handler as evaluate_handler
from handlers.plan_crops.main import handler as plan_crops_handler
from handlers.sensitivity.main import handler as sensitivity_handler
from handlers.synth.main import handler as synth_handler
from shared.errors import ScaleRecoveryError

# argparse dest -> RunConfig field
CONFIG_FLAGS = {
    "pitch_deg": "pitch_deg",
    "focal_px": "focal_px",
    "fx": "fx",
    "fy": "fy",
    "cx": "cx",
    "cy": "cy",
    "image_width": "image_width",
    "image_height": "image_height",
    "conf_threshold": "conf_threshold",
    "min_count": "min_count",
    "gsd_sat": "gsd_sat",
    "orthophoto": "orthophoto_mode",
    "seed": "seed",
    "categories": "categories",
    "vehicle_length": "vehicle_length_m",
    "vehicle_width": "vehicle_width_m",
    "vehicle_height": "vehicle_height_m",
    "fd_tolerance": "fd_rel_tolerance",
    "workers": "workers",
    "log_level": "log_level",
    "log_json": "log_json",
}

HANDLERS: Dict[str, Callable] = {
    "estimate": estimate_handler,
    "plan-crops": plan_crops_handler,
    "synth": synth_handler,
    "sensitivity": sensitivity_handler,
    "evaluate": evaluate_handler,
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("configuration (flags override the config file and SCALE_* variables)")
    group.add_argument("--config", help="KEY=VALUE config file (default: $SCALE_RECOVERY_CONFIG)")
    group.add_argument("--pitch-deg", type=float, help="Camera pitch in degrees, -90 is nadir")
    group.add_argument("--focal-px", type=float, help="Focal length in pixels (fx = fy)")
    group.add_argument("--fx", type=float)
    group.add_argument("--fy", type=float)
    group.add_argument("--cx", type=float, help="Principal point x (default: image center)")
    group.add_argument("--cy", type=float, help="Principal point y (default: image center)")
    group.add_argument("--image-width", type=int)
    group.add_argument("--image-height", type=int)
    group.add_argument("--conf-threshold", type=float, help="Keep boxes with confidence strictly above this")
    group.add_argument("--min-count", type=int, help="Minimum anchors needed for a scale")
    group.add_argument("--gsd-sat", type=float, help="Satellite map GSD in m/px")
    group.add_argument("--orthophoto", action="store_const", const=True, default=None,
                       help="Planar nadir input: pitch -90 and no vehicle height")
    group.add_argument("--seed", type=int)
    group.add_argument("--categories", help="Comma-separated anchor categories")
    group.add_argument("--vehicle-length", type=float, help="Prior length in meters")
    group.add_argument("--vehicle-width", type=float, help="Prior width in meters")
    group.add_argument("--vehicle-height", type=float, help="Prior height in meters")
    group.add_argument("--fd-tolerance", type=float, help="Relative tolerance of the finite-difference checks")
    group.add_argument("--workers", type=int, help="Worker threads for batches")
    group.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR")
    group.add_argument("--log-json", action="store_const", const=True, default=None, help="JSON log lines")
    common.add_argument("--quiet", action="store_true", help="Do not print the result JSON")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scale-recovery",
        description="Absolute scale and resolution of UAV images from vehicle oriented boxes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py synth --output-dir out/ --count 100 --pitch-deg -75
  python cli.py estimate out/ --pitch-deg -75 --workers 4
  python cli.py plan-crops out/synth_s0000_p-75.scale.json --map-width 4000 --map-height 4000 --gsd-sat 0.3
  python cli.py sensitivity --pitch-deg -60
  python cli.py evaluate --count 50 --pitches -90 -75 -60
        """,
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common], help="Recover the scale of detection files")
    est.add_argument("detections", help="Detection file (DOTA .txt or .json) or a directory of them")
    est.add_argument("--format", choices=["dota-obb", "json"], help="Input format (default: by suffix)")
    est.add_argument("--output", help="Report path (file input) or report directory (directory input)")
    est.add_argument("--naive", action="store_true", help="Use box edges as the vehicle footprint")

    crops = sub.add_parser("plan-crops", parents=[common], help="Plan satellite crops from a scale report")
    crops.add_argument("report", help="Report JSON written by estimate")
    crops.add_argument("--map-width", type=int, required=True)
    crops.add_argument("--map-height", type=int, required=True)
    crops.add_argument("--map-x", type=int, default=0)
    crops.add_argument("--map-y", type=int, default=0)
    crops.add_argument("--uav-width", type=float, dest="uav_width_px", help="UAV image width in px")
    crops.add_argument("--origin-x-m", type=float, help="Map x of pixel (0, 0) in meters")
    crops.add_argument("--origin-y-m", type=float, help="Map y of pixel (0, 0) in meters")
    crops.add_argument("--search-center", type=float, nargs=2, metavar=("PX", "PY"), dest="search_center_px")
    crops.add_argument("--search-radius-m", type=float)
    crops.add_argument("--mismatch", type=float, nargs="+", dest="mismatch_deltas",
                       help="Altitude errors (e.g. -0.1 0.1) to tabulate crop sizes for")
    crops.add_argument("--output")

    synth = sub.add_parser("synth", parents=[common], help="Write synthetic oracle detection files")
    synth.add_argument("--output-dir", required=True)
    synth.add_argument("--count", type=int, default=1)
    synth.add_argument("--n-vehicles", type=int, default=20)
    synth.add_argument("--altitude-m", type=float)
    synth.add_argument("--format", choices=["dota-obb", "json"], default="dota-obb")
    synth.add_argument("--dim-noise", type=float, dest="dim_noise_sigma", help="Log-normal sigma of vehicle dims")
    synth.add_argument("--outlier-fraction", type=float)
    synth.add_argument("--reference-height-m", type=float)
    synth.add_argument("--orthographic", action="store_true", help="Orthophoto scenes (nadir, no height effect)")

    sens = sub.add_parser("sensitivity", parents=[common], help="Finite-difference checks of the coefficients")
    sens.add_argument("detections", nargs="?", help="Detection file (default: a synthesized scene)")
    sens.add_argument("--sample-pixel", type=float, nargs=2, metavar=("U", "V"))
    sens.add_argument("--theta-step", type=float, help="Pitch step in radians")
    sens.add_argument("--focal-step", type=float, help="Focal step in pixels")
    sens.add_argument("--n-vehicles", type=int)
    sens.add_argument("--altitude-m", type=float)
    sens.add_argument("--output")

    ev = sub.add_parser("evaluate", parents=[common], help="MAPE of decoupled vs naive on synthetic batches")
    ev.add_argument("--count", type=int, default=50)
    ev.add_argument("--pitches", type=float, nargs="+", dest="pitches_deg")
    ev.add_argument("--n-vehicles", type=int)
    ev.add_argument("--altitude-m", type=float)
    ev.add_argument("--dim-noise", type=float, dest="dim_noise_sigma")
    ev.add_argument("--outlier-fraction", type=float)
    ev.add_argument("--outlier-confidence", type=float, nargs=2, metavar=("LOW", "HIGH"),
                    dest="outlier_confidence_range")
    ev.add_argument("--conf-thresholds", type=float, nargs="+")
    ev.add_argument("--min-counts", type=int, nargs="+")
    ev.add_argument("--output")
    return parser


def event_from_args(args: argparse.Namespace) -> dict:
    values = vars(args)
    overrides = {field: values.get(dest) for dest, field in CONFIG_FLAGS.items() if values.get(dest) is not None}
    skip = set(CONFIG_FLAGS) | {"command", "quiet", "config"}
    params = {k: v for k, v in values.items() if k not in skip and v is not None and v is not False}
    params["overrides"] = overrides
    if args.config:
        params["config"] = args.config
    return {"command": args.command, "parameters": params}


def _configure_logging(event: dict):
    params = event["parameters"]
    try:
        config, _ = load_run_config(params.get("config"), params.get("overrides"))
        setup_logging(config.log_level, config.log_json)
    except (ScaleRecoveryError, OSError):
        # the handler reports the configuration problem itself
        setup_logging()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    event = event_from_args(args)
    _configure_logging(event)

    response = HANDLERS[args.command](event)
    if not args.quiet:
        json.dump(response["body"], sys.stdout, indent=2, allow_nan=False)
        sys.stdout.write("\n")
    return response["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
