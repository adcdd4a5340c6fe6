# backend/handlers/common.py
"""Pieces shared by the command handlers: config loading, responses, error mapping"""
import logging
import traceback
from typing import Any, Dict, Optional, Tuple

from config import RunConfig, load_run_config
from security import secure_log
from shared.errors import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, ScaleRecoveryError, exit_code_for

logger = logging.getLogger(__name__)


def respond(exit_code: int, body: Any) -> Dict[str, Any]:
    return {"exit_code": exit_code, "body": body}


def ok(body: Any) -> Dict[str, Any]:
    return respond(EXIT_OK, body)


def invalid(message: str) -> Dict[str, Any]:
    secure_log(logger, "error", f"[PARAMS] {message}")
    return respond(EXIT_CONFIG, {"error": message})


def failure(exc: BaseException, command: str) -> Dict[str, Any]:
    """Response for an exception escaping a command"""
    code = exit_code_for(exc)
    if code == EXIT_INTERNAL and not isinstance(exc, ScaleRecoveryError):
        logger.error(f"[{command.upper()}] Unexpected error: {exc}\n{traceback.format_exc()}")
        message = f"Internal error: {exc}"
    else:
        secure_log(logger, "error", f"[{command.upper()}] {exc}")
        message = str(exc)
    return respond(code, {"error": message, "error_type": type(exc).__name__})


def parameters(event: Optional[dict]) -> dict:
    return (event or {}).get("parameters") or {}


def common_parameters(params: dict) -> Tuple[Optional[dict], Optional[str]]:
    """Config path and flag overrides every command accepts"""
    overrides = params.get("overrides") or {}
    if not isinstance(overrides, dict):
        return None, "overrides must be a mapping of config field names to values"
    config_path = params.get("config")
    if config_path is not None and not isinstance(config_path, str):
        return None, "config must be a file path"
    return {"config": config_path, "overrides": overrides}, None


def load_config(validated: dict) -> Tuple[RunConfig, Dict[str, str]]:
    return load_run_config(validated.get("config"), validated.get("overrides"))


def as_float(params: dict, key: str, default=None) -> Tuple[Optional[float], Optional[str]]:
    value = params.get(key, default)
    if value is None:
        return None, None
    try:
        return float(value), None
    except (TypeError, ValueError):
        return None, f"Invalid {key}: {value!r} is not a number"


def as_int(params: dict, key: str, default=None, minimum: Optional[int] = None) -> Tuple[Optional[int], Optional[str]]:
    value = params.get(key, default)
    if value is None:
        return None, None
    try:
        number = int(value)
    except (TypeError, ValueError):
        return None, f"Invalid {key}: {value!r} is not an integer"
    if number != float(value):
        return None, f"Invalid {key}: {value!r} is not an integer"
    if minimum is not None and number < minimum:
        return None, f"Invalid {key}: must be >= {minimum}, got {number}"
    return number, None
