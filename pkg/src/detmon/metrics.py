"""Evaluation metrics for the alert: ranking quality and risk reduction.

The failure class is the positive class throughout. All functions are pure
and depend only on the induced ranking (AUROC/AUPRC) or on the thresholded
warning decision (true warning rate, risk-averse points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    NoEvaluableFrames,
    NoFailureFrames,
    NoPositives,
    SingleClassInput,
)
from .map_eval import MapConfig, pooled_map
from .model import FAILURE, SUCCESS, FrameRecord

DEFAULT_WARNING_THRESHOLD = 0.5
DEFAULT_DECLARATION_RATES = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class ScoredFrame:
    """One frame as the metrics see it: alert score, true label, its mAP."""

    frame_id: str
    failure_score: float
    true_label: str
    per_frame_map: float

    def __post_init__(self):
        if self.true_label not in (FAILURE, SUCCESS):
            raise ValueError(f"true_label must be failure/success, got {self.true_label!r}")
        if not (0.0 <= self.failure_score <= 1.0 and math.isfinite(self.failure_score)):
            raise ValueError(f"failure_score {self.failure_score} outside [0, 1]")
        if not (0.0 <= self.per_frame_map <= 1.0 and math.isfinite(self.per_frame_map)):
            raise ValueError(f"per_frame_map {self.per_frame_map} outside [0, 1]")

    @property
    def is_failure(self) -> bool:
        return self.true_label == FAILURE


@dataclass(frozen=True)
class RamConfig:
    """Point scheme of the risk-averse metric plus the warning threshold."""

    correct_points: float = 1.0
    incorrect_points: float = -0.5
    abstain_points: float = 0.0
    warning_threshold: float = DEFAULT_WARNING_THRESHOLD

    def __post_init__(self):
        if not (self.correct_points > self.abstain_points > self.incorrect_points):
            raise ValueError("need correct > abstain > incorrect points")


def _split_scores(frames: list[ScoredFrame]) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([f.failure_score for f in frames if f.is_failure])
    neg = np.array([f.failure_score for f in frames if not f.is_failure])
    return pos, neg


def roc_auc(frames: list[ScoredFrame]) -> float:
    """Area under the ROC curve (trapezoidal), failure as positive class.

    Computed as the Mann-Whitney statistic with half credit for score ties,
    which equals the trapezoid area exactly.
    """
    pos, neg = _split_scores(frames)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClassInput("roc_auc needs both failure and success frames")
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    rank_sum_pos = float(ranks[: len(pos)].sum())
    u = rank_sum_pos - len(pos) * (len(pos) + 1) / 2.0
    return u / (len(pos) * len(neg))


def pr_auc(frames: list[ScoredFrame]) -> float:
    """Area under the precision-recall curve by average-precision summation.

    Operating points walk the unique scores in descending order (ties form a
    single point); AP = sum over points of (R_n - R_{n-1}) * P_n.
    """
    if not any(f.is_failure for f in frames):
        raise NoPositives("pr_auc needs at least one failure frame")
    scores = np.array([f.failure_score for f in frames])
    y = np.array([1.0 if f.is_failure else 0.0 for f in frames])
    n_pos = y.sum()

    order = np.argsort(-scores, kind="stable")
    scores, y = scores[order], y[order]
    # boundaries after each tie group of equal scores
    boundary = np.flatnonzero(np.diff(scores) != 0.0)
    cut = np.concatenate([boundary, [scores.size - 1]])

    tp = np.cumsum(y)[cut]
    count = cut + 1.0
    precision = tp / count
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def true_warning_rate(frames: list[ScoredFrame], cfg: RamConfig = RamConfig()) -> float:
    """Fraction of failure frames whose score clears the warning threshold."""
    failures = [f for f in frames if f.is_failure]
    if not failures:
        raise NoFailureFrames("true_warning_rate is undefined without failure frames")
    warned = sum(1 for f in failures if f.failure_score >= cfg.warning_threshold)
    return warned / len(failures)


def risk_averse_metric(
    frames: list[ScoredFrame], cfg: RamConfig = RamConfig(), use_alert: bool = True
) -> float:
    """Points per image: +correct/-incorrect per acted-on frame, abstain = 0.

    With the alert on, a warning (score >= threshold) means abstaining from
    the frame; abstained frames stay in the denominator.
    """
    if not frames:
        raise NoEvaluableFrames("risk_averse_metric needs at least one frame")
    total = 0.0
    for f in frames:
        if use_alert and f.failure_score >= cfg.warning_threshold:
            total += cfg.abstain_points
        elif f.is_failure:
            total += cfg.incorrect_points
        else:
            total += cfg.correct_points
    return total / len(frames)


def map_vs_declaration_rate(
    frames: list[ScoredFrame],
    rates: list[float] = DEFAULT_DECLARATION_RATES,
    mode: str = "mean",
    records: dict[str, FrameRecord] | None = None,
    cfg: MapConfig | None = None,
) -> list[tuple[float, float]]:
    """mAP of the most-trusted DR fraction of frames, per declaration rate.

    Frames are sorted by ascending failure score (ties broken by frame_id);
    for each rate the first ceil(DR * n) frames form the operating subset.
    ``mode="mean"`` averages their per-frame mAP values; ``mode="pooled"``
    recomputes an aggregate mAP over their FrameRecords (requires ``records``
    and ``cfg``). DR = 1.0 always reproduces the full-set value.
    """
    if not frames:
        raise NoEvaluableFrames("map_vs_declaration_rate needs at least one frame")
    rates = [float(r) for r in rates]
    if any(not (0.0 < r <= 1.0) for r in rates):
        raise ValueError("declaration rates must lie in (0, 1]")
    if any(b < a for a, b in zip(rates, rates[1:])):
        raise ValueError("declaration rates must be sorted ascending")
    if mode not in ("mean", "pooled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "pooled" and (records is None or cfg is None):
        raise ValueError("pooled mode needs records and a MapConfig")

    ranked = sorted(frames, key=lambda f: (f.failure_score, f.frame_id))
    n = len(ranked)
    out = []
    for rate in rates:
        # the epsilon guards ceil against float slop when rate * n is integral
        k = min(max(int(math.ceil(rate * n - 1e-9)), 1), n)
        subset = ranked[:k]
        if mode == "mean":
            value = float(np.mean([f.per_frame_map for f in subset]))
        else:
            value = pooled_map([records[f.frame_id] for f in subset], cfg)
            if value is None:
                raise NoEvaluableFrames(f"no ground truth in the DR={rate} subset")
        out.append((rate, value))
    return out
