"""Failure/success labeling of frames from their per-frame mAP.

A frame is labeled *failure* when its per-frame mAP falls strictly below the
critical threshold lambda; lambda is either given directly or resolved as
the k-th percentile of the observed mAP values (nearest-rank, so lambda is
always an observed value).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyInput
from .model import FAILURE, SUCCESS, AlertLabel

DEFAULT_PERCENTILE = 25.0
DEFAULT_LAMBDA = 0.5


@dataclass(frozen=True)
class LabelingConfig:
    """Exactly one of ``percentile`` (k in (0, 100)) or ``absolute`` (lambda in [0, 1])."""

    percentile: float | None = None
    absolute: float | None = None

    def __post_init__(self):
        if (self.percentile is None) == (self.absolute is None):
            raise ValueError("set exactly one of percentile / absolute")
        if self.percentile is not None and not (0.0 < self.percentile < 100.0):
            raise ValueError(f"percentile {self.percentile} outside (0, 100)")
        if self.absolute is not None and not (0.0 <= self.absolute <= 1.0):
            raise ValueError(f"absolute threshold {self.absolute} outside [0, 1]")


def percentile(values: list[float], k: float) -> float:
    """Nearest-rank k-th percentile: the ceil(k*n/100)-th smallest value."""
    if not values:
        raise EmptyInput("percentile of empty list")
    if not all(math.isfinite(v) for v in values):
        raise ValueError("percentile requires finite values")
    ordered = sorted(values)
    rank = math.ceil(k * len(ordered) / 100.0)
    rank = min(max(rank, 1), len(ordered))
    return ordered[rank - 1]


def resolve_lambda(maps: list[float], cfg: LabelingConfig) -> float:
    if cfg.absolute is not None:
        return cfg.absolute
    return percentile(maps, cfg.percentile)


def assign_labels(
    maps: list[tuple[str, float]], cfg: LabelingConfig
) -> tuple[float, list[AlertLabel]]:
    """Label every (frame_id, per_frame_map) pair; returns (lambda, labels).

    Failure iff per_frame_map < lambda, strictly: a frame sitting exactly at
    the threshold counts as success. Input order is preserved.
    """
    if not maps:
        raise EmptyInput("assign_labels needs at least one frame")
    lam = resolve_lambda([m for _, m in maps], cfg)
    labels = [
        AlertLabel(frame_id, m, FAILURE if m < lam else SUCCESS) for frame_id, m in maps
    ]
    return lam, labels
