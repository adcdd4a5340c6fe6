"""
Input hygiene for the scale recovery tools.

Detection files come from external detectors and batch directories may be
supplied by other users, so category names and file names are treated as
untrusted before they reach logs, reports or output paths.
"""
import re
import logging
from pathlib import Path
from typing import Union

logger = logging.getLogger(__name__)

MAX_LOG_LENGTH = 1000
MAX_STEM_LENGTH = 200


class SecurityUtils:
    """Security utility functions"""

    @staticmethod
    def sanitize_log_input(input_str) -> str:
        """Sanitize input for logging to prevent log injection"""
        if not isinstance(input_str, str):
            input_str = str(input_str)

        # Remove newlines and control characters
        sanitized = re.sub(r'[\r\n\t\x00-\x1f\x7f-\x9f]', '', input_str)

        if len(sanitized) > MAX_LOG_LENGTH:
            sanitized = sanitized[:MAX_LOG_LENGTH] + "..."

        return sanitized

    @staticmethod
    def validate_category(category: str) -> bool:
        """Detector class names: letters, digits, '-', '_' and '.' only"""
        if not isinstance(category, str):
            return False
        return bool(re.match(r'^[A-Za-z0-9][A-Za-z0-9_.\-]*$', category)) and len(category) <= 64

    @staticmethod
    def sanitize_stem(stem: str) -> str:
        """File stem safe to reuse for report and sidecar names"""
        if not isinstance(stem, str):
            return "detections"

        sanitized = re.sub(r'[<>:"/\\|?*\x00-\x1f\s]', '_', stem)
        sanitized = re.sub(r'\.\.+', '.', sanitized)
        sanitized = sanitized.lstrip('.-')

        if len(sanitized) > MAX_STEM_LENGTH:
            sanitized = sanitized[:MAX_STEM_LENGTH]

        return sanitized or "detections"

    @staticmethod
    def resolve_within(base_dir: Union[str, Path], name: str) -> Path:
        """Join name onto base_dir, refusing paths that escape it"""
        base = Path(base_dir).resolve()
        candidate = (base / name).resolve()
        if candidate != base and base not in candidate.parents:
            raise PermissionError(f"Refusing to write outside {base}: {SecurityUtils.sanitize_log_input(name)}")
        return candidate


def secure_log(logger_instance, level: str, message: str, **kwargs):
    """Secure logging function that sanitizes inputs"""
    sanitized_message = SecurityUtils.sanitize_log_input(message)

    sanitized_kwargs = {}
    for key, value in kwargs.items():
        sanitized_key = SecurityUtils.sanitize_log_input(str(key))
        sanitized_value = SecurityUtils.sanitize_log_input(str(value))
        sanitized_kwargs[sanitized_key] = sanitized_value

    log_func = getattr(logger_instance, level.lower(), logger_instance.info)
    if sanitized_kwargs:
        log_func(f"{sanitized_message} - {sanitized_kwargs}")
    else:
        log_func(sanitized_message)
