"""Deterministic synthetic frame streams with a latent degradation condition.

A scalar condition c_t in [0, 1] follows a reflected random walk; it drives
missed detections, localization noise, spurious detections, and the
statistics of the generated activation maps, so pooled features carry the
condition and per-frame mAP degrades with it. Everything derives from one
seed; per-channel activation constants are drawn before anything else, so
streams sharing a seed share the same activation model even when their
condition trajectories differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .model import (
    ActivationMap,
    AlertLabel,
    BoundingBox,
    Detection,
    FrameRecord,
    GroundTruthObject,
)

LAYER_NAME = "backbone_final"
BOX_SIDE_RANGE = (40.0, 200.0)
FP_SCORE_RANGE = (0.5, 0.9)


@dataclass(frozen=True)
class SynthConfig:
    n_frames: int
    seed: int = 0
    categories: tuple[str, ...] = ("person", "car")
    image_size: tuple[int, int] = (1242, 375)
    max_gt_per_frame: int = 6
    walk_step: float = 0.05
    walk_start: float = 0.5
    q_miss: float = 0.8
    fp_rate: float = 2.0
    loc_noise_gain: float = 8.0
    channels: int = 64
    map_size: tuple[int, int] = (12, 40)

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not self.categories:
            raise ValueError("categories must be non-empty")
        if not (0.0 <= self.q_miss <= 1.0):
            raise ValueError("q_miss must lie in [0, 1]")
        if not (0.0 <= self.walk_start <= 1.0):
            raise ValueError("walk_start must lie in [0, 1]")
        if self.walk_step < 0 or self.fp_rate < 0 or self.loc_noise_gain < 0:
            raise ValueError("rates must be non-negative")
        if self.channels < 1 or self.map_size[0] < 1 or self.map_size[1] < 1:
            raise ValueError("activation dimensions must be >= 1")


def frame_id_for(index: int) -> str:
    return f"{index:06d}"


def _reflect(value: float) -> float:
    while value < 0.0 or value > 1.0:
        if value < 0.0:
            value = -value
        if value > 1.0:
            value = 2.0 - value
    return value


def _random_box(rng: np.random.Generator, image_w: float, image_h: float) -> BoundingBox:
    w = rng.uniform(*BOX_SIDE_RANGE)
    h = rng.uniform(*BOX_SIDE_RANGE)
    w = min(w, image_w - 1.0)
    h = min(h, image_h - 1.0)
    x1 = rng.uniform(0.0, image_w - w)
    y1 = rng.uniform(0.0, image_h - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def _perturbed_box(
    rng: np.random.Generator, box: BoundingBox, scale: float, image_w: float, image_h: float
) -> BoundingBox:
    if scale <= 0.0:
        return box
    dx1, dy1, dx2, dy2 = rng.normal(0.0, scale, size=4)
    x1 = min(max(box.x1 + dx1, 0.0), image_w - 1.0)
    y1 = min(max(box.y1 + dy1, 0.0), image_h - 1.0)
    x2 = min(max(box.x2 + dx2, x1 + 1.0), image_w)
    y2 = min(max(box.y2 + dy2, y1 + 1.0), image_h)
    return BoundingBox(x1, y1, x2, y2)


def generate_stream(
    cfg: SynthConfig, condition: np.ndarray | list[float] | None = None
) -> tuple[list[FrameRecord], list[ActivationMap], list[float]]:
    """Generate (frames, activation maps, condition values), seed-deterministic.

    ``condition`` overrides the random walk with an explicit trajectory of
    length ``n_frames`` (values in [0, 1]), e.g. to force a degradation
    segment; per-channel activation constants are unaffected by the override.
    """
    rng = np.random.default_rng(cfg.seed)
    image_w, image_h = float(cfg.image_size[0]), float(cfg.image_size[1])
    n_ch, (map_h, map_w) = cfg.channels, cfg.map_size

    # per-channel constants: clean mean, degraded mean, base spread
    mu = rng.uniform(0.5, 1.5, size=n_ch)
    nu = rng.uniform(0.5, 1.5, size=n_ch)
    sigma = rng.uniform(0.1, 0.4, size=n_ch)

    if condition is None:
        c = np.empty(cfg.n_frames)
        c[0] = cfg.walk_start
        steps = rng.uniform(-cfg.walk_step, cfg.walk_step, size=cfg.n_frames - 1)
        for t in range(1, cfg.n_frames):
            c[t] = _reflect(c[t - 1] + steps[t - 1])
    else:
        c = np.asarray(condition, dtype=np.float64)
        if c.shape != (cfg.n_frames,):
            raise ValueError(f"condition must have length {cfg.n_frames}")
        if c.min() < 0.0 or c.max() > 1.0:
            raise ValueError("condition values must lie in [0, 1]")

    frames: list[FrameRecord] = []
    activations: list[ActivationMap] = []
    for t in range(cfg.n_frames):
        ct = float(c[t])
        fid = frame_id_for(t)

        n_gt = int(rng.integers(0, cfg.max_gt_per_frame + 1))
        ground_truth = []
        detections = []
        for _ in range(n_gt):
            category = cfg.categories[int(rng.integers(0, len(cfg.categories)))]
            box = _random_box(rng, image_w, image_h)
            ground_truth.append(GroundTruthObject(box, category))
            if rng.random() < 1.0 - ct * cfg.q_miss:
                noisy = _perturbed_box(rng, box, ct * cfg.loc_noise_gain, image_w, image_h)
                score = 1.0 - ct * rng.uniform(0.0, 0.5)
                detections.append(Detection(noisy, category, score))

        for _ in range(int(rng.poisson(ct * cfg.fp_rate))):
            category = cfg.categories[int(rng.integers(0, len(cfg.categories)))]
            detections.append(
                Detection(_random_box(rng, image_w, image_h), category, rng.uniform(*FP_SCORE_RANGE))
            )

        mean_t = mu * (1.0 - ct) + nu * ct
        std_t = sigma * (1.0 + ct)
        values = rng.normal(mean_t[:, None], std_t[:, None], size=(n_ch, map_h * map_w))
        activations.append(
            ActivationMap(fid, LAYER_NAME, values.reshape(n_ch, map_h, map_w).astype(np.float32))
        )
        frames.append(FrameRecord(fid, tuple(ground_truth), tuple(detections)))

    return frames, activations, c.tolist()


def condition_failure_correlation(
    condition: list[float], labels: list[AlertLabel]
) -> tuple[float, bool]:
    """Spearman rank correlation between c_t and the failure indicator.

    Labels are aligned to the stream through their frame ids (synth frame
    ids encode the frame index), so label sets restricted to frames with
    defined mAP are fine. Returns (0.0, False) when either side is constant
    and the correlation is undefined.
    """
    c = np.asarray(condition, dtype=np.float64)
    idx = np.array([int(l.frame_id) for l in labels])
    flags = np.array([1.0 if l.is_failure else 0.0 for l in labels])
    aligned = c[idx]
    if np.all(aligned == aligned[0]) or np.all(flags == flags[0]):
        return 0.0, False
    rho = spearmanr(aligned, flags).statistic
    if not np.isfinite(rho):
        return 0.0, False
    return float(rho), True
