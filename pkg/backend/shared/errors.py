# backend/shared/errors.py
"""
Error hierarchy and process exit codes for the scale recovery tools.

Every domain error derives from ScaleRecoveryError, itself a ValueError, so
callers that only care about "bad input" can keep catching ValueError.
An image with too few anchors is not an error: it is reported through
ScaleStatus.INSUFFICIENT_ANCHORS (see resolution_crop).
"""

from typing import Optional

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INSUFFICIENT_ANCHORS = 3
EXIT_PARSE = 4
EXIT_CONFIG = 5
EXIT_IO = 6
EXIT_CROP = 7


class ScaleRecoveryError(ValueError):
    """Base class for all scale recovery errors"""

    exit_code = EXIT_INTERNAL


class InvalidIntrinsicsError(ScaleRecoveryError):
    exit_code = EXIT_CONFIG


class InvalidPoseError(ScaleRecoveryError):
    exit_code = EXIT_CONFIG


class InvalidPriorError(ScaleRecoveryError):
    exit_code = EXIT_CONFIG


class DegenerateDetectionError(ScaleRecoveryError):
    """A detection whose geometry cannot yield a scale (zero size, no ground ray)"""

    exit_code = EXIT_PARSE


class EmptyInputError(ScaleRecoveryError):
    exit_code = EXIT_INSUFFICIENT_ANCHORS


class DetectionParseError(ScaleRecoveryError):
    """Malformed detection record; carries the 1-based line (or record) number"""

    exit_code = EXIT_PARSE

    def __init__(self, message: str, line_number: Optional[int] = None, source: Optional[str] = None):
        self.line_number = line_number
        self.source = source
        location = ""
        if source:
            location += f"{source}"
        if line_number is not None:
            location += f"{':' if source else ''}line {line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class CropPlanningError(ScaleRecoveryError):
    exit_code = EXIT_CROP


class ConfigError(ScaleRecoveryError):
    exit_code = EXIT_CONFIG


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised by a command to its process exit code"""
    if isinstance(exc, ScaleRecoveryError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_INTERNAL
