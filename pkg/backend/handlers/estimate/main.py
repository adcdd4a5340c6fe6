# backend/handlers/estimate/main.py
"""
estimate: detections -> JSON scale report.

A single detection file gives one report; a directory is processed with
independent per-file workers, one report per file plus a batch summary.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from config import RunConfig
from handlers.common import common_parameters, failure, invalid, load_config, parameters, respond
from security import SecurityUtils
from shared.detection_io import DetectionFormat, load_detections
from shared.errors import EXIT_INSUFFICIENT_ANCHORS, EXIT_OK
from shared.report import build_meta, build_report, write_report
from shared.scale_pipeline import ScaleEstimator
from shared.utils import is_detection_file, report_filename

logger = logging.getLogger(__name__)


def validate_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    result, error = common_parameters(params)
    if error:
        return None, error

    detections = params.get("detections")
    if not detections:
        return None, "detections parameter is required (file or directory)"
    result["detections"] = str(detections)

    fmt = params.get("format")
    if fmt is not None:
        try:
            fmt = DetectionFormat(fmt)
        except ValueError:
            return None, f"Invalid format: {fmt!r} (expected 'dota-obb' or 'json')"
    result["format"] = fmt
    result["output"] = params.get("output")
    result["naive"] = bool(params.get("naive", False))
    return result, None


def status_exit_code(report: dict) -> int:
    return EXIT_OK if report["scale"]["status"] == "ok" else EXIT_INSUFFICIENT_ANCHORS


def estimate_file(
    path: Path,
    config: RunConfig,
    provenance: Dict[str, str],
    estimator: ScaleEstimator,
    fmt: Optional[DetectionFormat] = None,
    naive: bool = False,
) -> dict:
    intrinsics = estimator.intrinsics
    parsed = load_detections(path, fmt, categories=config.category_list, intrinsics=intrinsics)
    result = estimator.estimate_naive(parsed.detections) if naive else estimator.estimate(parsed.detections)
    meta = build_meta(
        estimator,
        source=SecurityUtils.sanitize_log_input(path.name),
        provenance=provenance,
        parse_summary=parsed.summary.to_dict(),
        extra={"format": parsed.format.value, "naive_mode": naive, "categories": config.category_list},
    )
    return build_report(result, meta)


def _run_batch(directory: Path, validated: dict, config: RunConfig, provenance: Dict[str, str]) -> dict:
    files = sorted(p for p in directory.iterdir() if is_detection_file(p))
    output_dir = Path(validated["output"]) if validated.get("output") else directory
    estimator = config.estimator()
    logger.info(f"[ESTIMATE] Batch of {len(files)} files with {config.workers} worker(s)")

    def run_one(path: Path) -> dict:
        try:
            report = estimate_file(path, config, provenance, estimator, validated["format"], validated["naive"])
            target = SecurityUtils.resolve_within(output_dir, report_filename(path))
            write_report(report, target)
            return {
                "file": path.name,
                "exit_code": status_exit_code(report),
                "status": report["scale"]["status"],
                "global_scale": report["scale"]["global_scale"],
                "report": target.name,
            }
        except Exception as e:
            outcome = failure(e, "estimate")
            return {"file": path.name, "exit_code": outcome["exit_code"], "status": "error",
                    "error": outcome["body"]["error"]}

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            entries: List[dict] = list(pool.map(run_one, files))
    else:
        entries = [run_one(p) for p in files]

    n_ok = sum(1 for e in entries if e["status"] == "ok")
    n_error = sum(1 for e in entries if e["status"] == "error")
    return {
        "n_files": len(entries),
        "n_ok": n_ok,
        "n_insufficient": len(entries) - n_ok - n_error,
        "n_error": n_error,
        "used_ratio": n_ok / len(entries) if entries else 0.0,
        "statistics": estimator.get_statistics(),
        "files": entries,
    }


def batch_exit_code(summary: dict) -> int:
    """First failing file decides; otherwise ok unless no file produced a scale"""
    for entry in summary["files"]:
        if entry["status"] == "error":
            return entry["exit_code"]
    return EXIT_OK if summary["n_ok"] else EXIT_INSUFFICIENT_ANCHORS


def handler(event, context=None):
    """Estimate the scale of one detection file or a directory of them"""
    validated, error = validate_parameters(parameters(event))
    if error:
        return invalid(error)

    try:
        config, provenance = load_config(validated)
        target = Path(validated["detections"])

        if target.is_dir():
            summary = _run_batch(target, validated, config, provenance)
            return respond(batch_exit_code(summary), summary)

        report = estimate_file(
            target, config, provenance, config.estimator(), validated["format"], validated["naive"]
        )
        if validated.get("output"):
            write_report(report, validated["output"])
        return respond(status_exit_code(report), report)

    except Exception as e:
        return failure(e, "estimate")
