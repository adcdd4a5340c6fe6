# backend/shared/utils.py
from pathlib import Path
from typing import Union

from security import SecurityUtils

REPORT_SUFFIX = ".scale.json"
TRUTH_SUFFIX = ".truth.json"


def report_filename(detection_path: Union[str, Path], suffix: str = REPORT_SUFFIX) -> str:
    stem = SecurityUtils.sanitize_stem(Path(detection_path).stem)
    return f"{stem}{suffix}"


def truth_sidecar_path(detection_path: Union[str, Path]) -> Path:
    path = Path(detection_path)
    return path.with_name(f"{SecurityUtils.sanitize_stem(path.stem)}{TRUTH_SUFFIX}")


def scene_stem(seed: int, pitch_deg: float) -> str:
    """synth_s0007_p-75 style names, sortable by seed"""
    return f"synth_s{seed:04d}_p{pitch_deg:g}"


def is_detection_file(path: Path) -> bool:
    name = path.name.lower()
    if not path.is_file() or name.endswith(TRUTH_SUFFIX) or name.endswith(REPORT_SUFFIX):
        return False
    return path.suffix.lower() in (".txt", ".json")
