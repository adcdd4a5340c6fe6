# backend/shared/aggregation.py
"""
Anchor filtering and robust global scale aggregation.

Rules:
- A detection is a valid anchor only when its confidence is strictly above
  the threshold
- An image is scored only when at least min_count valid anchors remain
- Instance scales are reduced to one global scale with Tukey's fences:
  values inside [Q1 - 1.5*IQR, Q3 + 1.5*IQR] (closed) are averaged
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from shared.errors import ConfigError, DegenerateDetectionError, EmptyInputError
from shared.geometry_core import OrientedDetection

logger = logging.getLogger(__name__)

IQR_MULTIPLIER = 1.5


@dataclass(frozen=True)
class FilterConfig:
    conf_threshold: float = 0.5
    min_count: int = 5

    def __post_init__(self):
        if not (0.0 <= self.conf_threshold <= 1.0):
            raise ConfigError(f"conf_threshold must lie in [0, 1], got {self.conf_threshold}")
        if int(self.min_count) != self.min_count or self.min_count < 1:
            raise ConfigError(f"min_count must be an integer >= 1, got {self.min_count}")


@dataclass
class FilterOutcome:
    """Detections surviving the confidence gate, with their original positions"""

    kept: List[OrientedDetection]
    kept_indices: List[int]
    n_input: int
    min_count: int

    @property
    def sufficient(self) -> bool:
        return len(self.kept) >= self.min_count

    @property
    def n_valid(self) -> int:
        return len(self.kept)


@dataclass
class AggregationResult:
    global_scale: float
    q1: float
    q3: float
    iqr: float
    inlier_low: float
    inlier_high: float
    inlier_indices: List[int] = field(default_factory=list)
    n_valid: int = 0
    n_inliers: int = 0

    def inlier_mask(self) -> List[bool]:
        chosen = set(self.inlier_indices)
        return [i in chosen for i in range(self.n_valid)]

    def to_dict(self) -> dict:
        return {
            "global_scale": self.global_scale,
            "q1": self.q1,
            "q3": self.q3,
            "iqr": self.iqr,
            "inlier_low": self.inlier_low,
            "inlier_high": self.inlier_high,
            "inlier_indices": list(self.inlier_indices),
            "n_valid": self.n_valid,
            "n_inliers": self.n_inliers,
        }


def filter_detections(dets: Sequence[OrientedDetection], cfg: FilterConfig) -> FilterOutcome:
    kept, kept_indices = [], []
    for index, det in enumerate(dets):
        if det.confidence > cfg.conf_threshold:
            kept.append(det)
            kept_indices.append(index)

    outcome = FilterOutcome(kept=kept, kept_indices=kept_indices, n_input=len(dets), min_count=cfg.min_count)
    if not outcome.sufficient:
        logger.warning(
            f"[FILTER] Insufficient anchors: {outcome.n_valid} of {len(dets)} above "
            f"conf {cfg.conf_threshold} (need {cfg.min_count})"
        )
    else:
        logger.debug(f"[FILTER] {outcome.n_valid} of {len(dets)} detections kept")
    return outcome


def iqr_aggregate(scales: Sequence[float]) -> AggregationResult:
    """Mean of the instance scales that fall inside Tukey's fences"""
    values = np.asarray(scales, dtype=float)
    if values.size == 0:
        raise EmptyInputError("Cannot aggregate an empty list of scales")
    if not np.all(np.isfinite(values)):
        raise DegenerateDetectionError("Instance scales must be finite")

    q1, q3 = np.percentile(values, [25, 75], method="linear")
    iqr = q3 - q1
    low = q1 - IQR_MULTIPLIER * iqr
    high = q3 + IQR_MULTIPLIER * iqr

    mask = (values >= low) & (values <= high)
    inliers = np.sort(values[mask])
    if inliers[0] == inliers[-1]:
        global_scale = float(inliers[0])
    else:
        global_scale = float(np.clip(inliers.mean(), values.min(), values.max()))

    result = AggregationResult(
        global_scale=global_scale,
        q1=float(q1),
        q3=float(q3),
        iqr=float(iqr),
        inlier_low=float(low),
        inlier_high=float(high),
        inlier_indices=[int(i) for i in np.flatnonzero(mask)],
        n_valid=int(values.size),
        n_inliers=int(mask.sum()),
    )
    rejected = result.n_valid - result.n_inliers
    if rejected:
        logger.info(f"[IQR] Rejected {rejected} of {result.n_valid} instance scales outside [{low:.6f}, {high:.6f}]")
    return result
