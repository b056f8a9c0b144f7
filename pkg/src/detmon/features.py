"""Alert input features pooled from activation maps and detector outputs.

Channel-wise reductions of a backbone activation map (mean, max, population
std) and their concatenations; plus two scalar features derived from the
detections themselves (mean confidence above a cutoff, count above it).
All operations are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, FrameIdMismatch
from .model import ActivationMap, FeatureVector, FrameRecord

DEFAULT_SCORE_CUTOFF = 0.5

POOL_KINDS = ("mean", "max", "std", "mean_std", "mean_max", "mean_max_std", "layer")


@dataclass(frozen=True)
class PoolSpec:
    """Which pooled feature to produce; ``score_cutoff`` only affects detection features."""

    kind: str
    score_cutoff: float = DEFAULT_SCORE_CUTOFF

    def __post_init__(self):
        if self.kind not in POOL_KINDS:
            raise ValueError(f"unknown pool kind {self.kind!r}; expected one of {POOL_KINDS}")
        if not (0.0 <= self.score_cutoff <= 1.0):
            raise ValueError(f"score cutoff {self.score_cutoff} outside [0, 1]")


def mean_pool(a: ActivationMap) -> FeatureVector:
    """Per-channel spatial mean, length N."""
    values = a.values.mean(axis=(1, 2), dtype=np.float64)
    return FeatureVector(a.frame_id, "mean", values)


def max_pool(a: ActivationMap) -> FeatureVector:
    """Per-channel spatial max, length N (no clamping: may be negative)."""
    values = a.values.max(axis=(1, 2)).astype(np.float64)
    return FeatureVector(a.frame_id, "max", values)


def std_pool(a: ActivationMap) -> FeatureVector:
    """Per-channel population standard deviation (divide by W*H), length N."""
    flat = a.values.reshape(a.channels, -1).astype(np.float64)
    values = flat.std(axis=1, ddof=0)
    return FeatureVector(a.frame_id, "std", values)


def concat_features(parts: list[FeatureVector], feature_name: str | None = None) -> FeatureVector:
    """Concatenate parts in the given order; all must share one frame_id."""
    if not parts:
        raise EmptyInput("concat_features needs at least one part")
    frame_id = parts[0].frame_id
    for p in parts[1:]:
        if p.frame_id != frame_id:
            raise FrameIdMismatch(f"cannot concat {frame_id!r} with {p.frame_id!r}")
    if feature_name is None:
        feature_name = "_".join(p.feature_name for p in parts)
    values = np.concatenate([p.values for p in parts])
    return FeatureVector(frame_id, feature_name, values)


def pooled_feature(a: ActivationMap, kind: str) -> FeatureVector:
    """One of mean / max / std or their concatenations for a single layer."""
    pools = {"mean": mean_pool, "max": max_pool, "std": std_pool}
    if kind in pools:
        return pools[kind](a)
    if kind == "mean_std":
        return concat_features([mean_pool(a), std_pool(a)], "mean_std")
    if kind == "mean_max":
        return concat_features([mean_pool(a), max_pool(a)], "mean_max")
    if kind == "mean_max_std":
        return concat_features([mean_pool(a), max_pool(a), std_pool(a)], "mean_max_std")
    raise ValueError(f"unknown pooled feature kind {kind!r}")


def layer_feature(maps: list[ActivationMap]) -> FeatureVector:
    """Mean pooling of every layer of one frame, concatenated in the given order."""
    if not maps:
        raise EmptyInput("layer_feature needs at least one activation map")
    frame_id = maps[0].frame_id
    for m in maps[1:]:
        if m.frame_id != frame_id:
            raise FrameIdMismatch(f"cannot mix frames {frame_id!r} and {m.frame_id!r}")
    values = np.concatenate([mean_pool(m).values for m in maps])
    return FeatureVector(frame_id, "layer", values)


def detection_features(frame: FrameRecord, cutoff: float = DEFAULT_SCORE_CUTOFF) -> tuple[float, int]:
    """(mean confidence, count) of detections with score strictly above ``cutoff``.

    The mean is 0 when nothing clears the cutoff, signaling "no confident
    proposals".
    """
    scores = [d.score for d in frame.detections if d.score > cutoff]
    if not scores:
        return 0.0, 0
    return float(np.mean(scores)), len(scores)


def mean_conf_score_feature(frame: FrameRecord, cutoff: float = DEFAULT_SCORE_CUTOFF) -> FeatureVector:
    mean_conf, _ = detection_features(frame, cutoff)
    return FeatureVector(frame.frame_id, "mean_conf_score", [mean_conf])


def n_proposals_feature(frame: FrameRecord, cutoff: float = DEFAULT_SCORE_CUTOFF) -> FeatureVector:
    _, count = detection_features(frame, cutoff)
    return FeatureVector(frame.frame_id, "n_proposals", [float(count)])


def detection_feature(frame: FrameRecord, cutoff: float = DEFAULT_SCORE_CUTOFF) -> FeatureVector:
    """Both detection-derived scalars as one vector [mean_conf_score, n_proposals]."""
    mean_conf, count = detection_features(frame, cutoff)
    return FeatureVector(frame.frame_id, "detection", [mean_conf, float(count)])
