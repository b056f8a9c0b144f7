"""Per-frame, pooled, and sliding-window mean average precision.

Per-frame mAP is the monitored quantity: the mean of per-category average
precision over an IoU threshold grid, restricted to categories that actually
have ground truth in the frame. Frames with no ground truth of any
configured category have *undefined* mAP, represented as ``None``.

All functions here are pure; evaluations of different frames are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoEvaluableFrames, WindowTooLarge
from .model import BoundingBox, Detection, FrameRecord, GroundTruthObject

DEFAULT_IOU_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2).tolist())
DEFAULT_RECALL_POINTS = 101


@dataclass(frozen=True)
class MapConfig:
    """Evaluation protocol: IoU grid, recall sampling density, category set."""

    categories: frozenset[str]
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_points: int = DEFAULT_RECALL_POINTS

    def __post_init__(self):
        object.__setattr__(self, "categories", frozenset(self.categories))
        object.__setattr__(self, "iou_thresholds", tuple(float(t) for t in self.iou_thresholds))
        if not self.categories:
            raise ValueError("categories must be non-empty")
        if not all(0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise ValueError("iou thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(self.iou_thresholds, self.iou_thresholds[1:])):
            raise ValueError("iou thresholds must be strictly increasing")
        if self.recall_points < 2:
            raise ValueError("recall_points must be >= 2")

    def sorted_categories(self) -> list[str]:
        return sorted(self.categories)


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome for one (category, IoU threshold) pair.

    ``tp`` is aligned with detections sorted by descending score (ties kept
    in input order); ``scores`` carries the same ordering so results from
    several frames can be pooled into one ranked list.
    """

    tp: np.ndarray
    scores: np.ndarray
    n_gt: int
    unmatched_gt: int

    def __post_init__(self):
        tp = np.asarray(self.tp, dtype=bool)
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "tp", tp)
        object.__setattr__(self, "scores", scores)
        n_tp = int(tp.sum())
        assert n_tp <= min(tp.size, self.n_gt)
        assert self.unmatched_gt == self.n_gt - n_tp


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; symmetric, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _boxes_array(boxes) -> np.ndarray:
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=np.float64).reshape(-1, 4)


def _iou_matrix(det_boxes: np.ndarray, gt_boxes: np.ndarray) -> np.ndarray:
    """Pairwise IoU, shape (n_det, n_gt)."""
    if det_boxes.shape[0] == 0 or gt_boxes.shape[0] == 0:
        return np.zeros((det_boxes.shape[0], gt_boxes.shape[0]))
    ix = np.minimum(det_boxes[:, None, 2], gt_boxes[None, :, 2]) - np.maximum(
        det_boxes[:, None, 0], gt_boxes[None, :, 0]
    )
    iy = np.minimum(det_boxes[:, None, 3], gt_boxes[None, :, 3]) - np.maximum(
        det_boxes[:, None, 1], gt_boxes[None, :, 1]
    )
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    inter[(ix <= 0.0) | (iy <= 0.0)] = 0.0
    area_d = (det_boxes[:, 2] - det_boxes[:, 0]) * (det_boxes[:, 3] - det_boxes[:, 1])
    area_g = (gt_boxes[:, 2] - gt_boxes[:, 0]) * (gt_boxes[:, 3] - gt_boxes[:, 1])
    return inter / (area_d[:, None] + area_g[None, :] - inter)


class _CategoryRanking:
    """Detections of one category ranked by score, with their IoU matrix.

    Built once per (frame, category) so that matching at all IoU thresholds
    reuses the same pairwise IoU values.
    """

    __slots__ = ("scores", "iou_mat", "n_gt")

    def __init__(self, gt, det, category: str):
        gt_cat = [g for g in gt if g.category == category]
        det_cat = [d for d in det if d.category == category]
        order = sorted(range(len(det_cat)), key=lambda i: -det_cat[i].score)
        self.scores = np.array([det_cat[i].score for i in order], dtype=np.float64)
        self.n_gt = len(gt_cat)
        self.iou_mat = _iou_matrix(
            _boxes_array([det_cat[i].box for i in order]), _boxes_array([g.box for g in gt_cat])
        )

    def match(self, iou_threshold: float) -> MatchResult:
        n_det = self.scores.shape[0]
        tp = np.zeros(n_det, dtype=bool)
        taken = np.zeros(self.n_gt, dtype=bool)
        for d in range(n_det):
            row = self.iou_mat[d]
            best, best_iou = -1, 0.0
            for g in range(self.n_gt):
                if not taken[g] and row[g] >= iou_threshold and row[g] > best_iou:
                    best, best_iou = g, row[g]
            if best >= 0:
                tp[d] = True
                taken[best] = True
        return MatchResult(tp, self.scores, self.n_gt, self.n_gt - int(tp.sum()))


def match_detections(
    gt: list[GroundTruthObject],
    det: list[Detection],
    category: str,
    iou_threshold: float,
) -> MatchResult:
    """Greedily match detections of ``category`` to ground truth.

    Detections are taken in descending score order (ties keep input order);
    each claims the still-unmatched GT of that category with the highest
    IoU >= threshold, IoU ties going to the lowest GT index.
    """
    return _CategoryRanking(gt, det, category).match(iou_threshold)


def ap_from_ranked_tp(tp: np.ndarray, n_gt: int, recall_points: int) -> float | None:
    """Average precision of a ranked TP/FP sequence against ``n_gt`` objects.

    Interpolated precision (the max precision at any recall >= r) is sampled
    at ``recall_points`` evenly spaced recall levels in [0, 1] and averaged.
    Undefined (``None``) when there is no ground truth.
    """
    if n_gt == 0:
        return None
    tp = np.asarray(tp, dtype=bool)
    if tp.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.arange(1, tp.size + 1)
    # precision envelope: running max from the high-recall end
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # j/(points-1) rather than linspace: the grid values are exact quotients
    grid = np.arange(recall_points) / (recall_points - 1)
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < tp.size, envelope[np.minimum(idx, tp.size - 1)], 0.0)
    return float(sampled.mean())


def per_frame_ap(
    frame: FrameRecord,
    category: str,
    iou_threshold: float,
    recall_points: int = DEFAULT_RECALL_POINTS,
) -> float | None:
    """AP of one frame for one category at one IoU threshold.

    ``None`` when the frame has no ground truth of the category.
    """
    ranking = _CategoryRanking(frame.ground_truth, frame.detections, category)
    if ranking.n_gt == 0:
        return None
    result = ranking.match(iou_threshold)
    return ap_from_ranked_tp(result.tp, result.n_gt, recall_points)


def per_frame_map(frame: FrameRecord, cfg: MapConfig) -> float | None:
    """Mean AP over the (category, IoU threshold) grid for one frame.

    Only categories with at least one GT object in the frame contribute;
    ``None`` when no configured category has any ground truth.
    """
    values = []
    for category in cfg.sorted_categories():
        ranking = _CategoryRanking(frame.ground_truth, frame.detections, category)
        if ranking.n_gt == 0:
            continue
        for t in cfg.iou_thresholds:
            result = ranking.match(t)
            values.append(ap_from_ranked_tp(result.tp, result.n_gt, cfg.recall_points))
    if not values:
        return None
    return float(np.mean(values))


def _pool_matches(matches: list[MatchResult], recall_points: int) -> float | None:
    """AP of several frames' match results merged into one ranked list."""
    n_gt = sum(m.n_gt for m in matches)
    if n_gt == 0:
        return None
    scores = np.concatenate([m.scores for m in matches]) if matches else np.zeros(0)
    tp = np.concatenate([m.tp for m in matches]) if matches else np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    return ap_from_ranked_tp(tp[order], n_gt, recall_points)


def pooled_map(frames: list[FrameRecord], cfg: MapConfig) -> float | None:
    """Aggregate mAP treating all frames as one evaluation unit per pair.

    Matching stays per frame; the ranked TP/FP lists are pooled across
    frames (stable on score ties, frame order first) before computing AP.
    """
    values = []
    for category in cfg.sorted_categories():
        matches_per_t: dict[float, list[MatchResult]] = {t: [] for t in cfg.iou_thresholds}
        n_gt = 0
        for frame in frames:
            ranking = _CategoryRanking(frame.ground_truth, frame.detections, category)
            n_gt += ranking.n_gt
            for t in cfg.iou_thresholds:
                matches_per_t[t].append(ranking.match(t))
        if n_gt == 0:
            continue
        for t in cfg.iou_thresholds:
            values.append(_pool_matches(matches_per_t[t], cfg.recall_points))
    if not values:
        return None
    return float(np.mean(values))


def sliding_window_map(
    frames: list[FrameRecord],
    window: int,
    cfg: MapConfig,
    per_frame_average: bool = False,
) -> list[tuple[int, float | None]]:
    """mAP over every contiguous window, keyed by the window's end index.

    The default pools all GT/detections of the window's frames into one
    evaluation unit per (category, threshold) pair; ``per_frame_average``
    switches to averaging the defined per-frame mAP values instead.
    Windows with no ground truth yield ``None`` entries.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(frames):
        raise WindowTooLarge(f"window {window} exceeds {len(frames)} frames")

    if per_frame_average:
        maps = [per_frame_map(f, cfg) for f in frames]
        out = []
        for end in range(window - 1, len(frames)):
            vals = [m for m in maps[end - window + 1 : end + 1] if m is not None]
            out.append((end, float(np.mean(vals)) if vals else None))
        return out

    categories = cfg.sorted_categories()
    # per frame, per category: match once at every threshold, reuse per window
    per_frame: list[dict[str, dict[float, MatchResult]]] = []
    for frame in frames:
        by_cat = {}
        for category in categories:
            ranking = _CategoryRanking(frame.ground_truth, frame.detections, category)
            by_cat[category] = {t: ranking.match(t) for t in cfg.iou_thresholds}
        per_frame.append(by_cat)

    out = []
    for end in range(window - 1, len(frames)):
        span = range(end - window + 1, end + 1)
        values = []
        for category in categories:
            window_matches = {t: [per_frame[i][category][t] for i in span] for t in cfg.iou_thresholds}
            if sum(m.n_gt for m in window_matches[cfg.iou_thresholds[0]]) == 0:
                continue
            for t in cfg.iou_thresholds:
                values.append(_pool_matches(window_matches[t], cfg.recall_points))
        out.append((end, float(np.mean(values)) if values else None))
    return out


def subset_map(frames: list[FrameRecord], cfg: MapConfig) -> float:
    """Mean of defined per-frame mAP values over a non-empty subset."""
    values = [m for m in (per_frame_map(f, cfg) for f in frames) if m is not None]
    if not values:
        raise NoEvaluableFrames("no frame in the subset has a defined per-frame mAP")
    return float(np.mean(values))
