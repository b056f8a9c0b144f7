"""Core domain types: boxes, detections, frames, activation maps, features.

All types are immutable after construction (frozen dataclasses, read-only
numpy buffers) and therefore safe to share between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidBox, InvalidScore

FAILURE = "failure"
SUCCESS = "success"

#: Feature names the toolkit produces itself; "external" marks vectors
#: computed outside the toolkit and ingested through the feature file format.
FEATURE_NAMES = (
    "mean",
    "max",
    "std",
    "mean_std",
    "mean_max",
    "mean_max_std",
    "layer",
    "mean_conf_score",
    "n_proposals",
    "detection",
    "external",
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates, corner form."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBox(f"non-finite coordinates {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBox(f"degenerate box {coords}: need x2 > x1 and y2 > y1")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection:
    """One predicted box with its category label and confidence score."""

    box: BoundingBox
    category: str
    score: float

    def __post_init__(self):
        if not self.category:
            raise InvalidBox("detection category must be non-empty")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidScore(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthObject:
    """One annotated object: box plus category label."""

    box: BoundingBox
    category: str

    def __post_init__(self):
        if not self.category:
            raise InvalidBox("ground-truth category must be non-empty")


@dataclass(frozen=True)
class FrameRecord:
    """One frame's annotations and detector predictions.

    Frames are referenced by id only; no pixels are stored. Either list may
    be empty.
    """

    frame_id: str
    ground_truth: tuple[GroundTruthObject, ...] = ()
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        object.__setattr__(self, "detections", tuple(self.detections))

    def categories(self) -> set[str]:
        """Categories present in the ground truth of this frame."""
        return {g.category for g in self.ground_truth}


@dataclass(frozen=True)
class ActivationMap:
    """One backbone layer's activations for one frame.

    ``values`` is an (N, H, W) float32 array in channel-major order; the
    element count N*H*W is asserted on construction and on load.
    """

    frame_id: str
    layer_name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise DimensionMismatch(f"activation map must be (N, H, W), got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1 or v.shape[2] < 1:
            raise DimensionMismatch(f"activation map dims must be >= 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidBox(f"activation map {self.frame_id}/{self.layer_name} has non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class FeatureVector:
    """A named, fixed-length real vector describing one frame."""

    frame_id: str
    feature_name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise InvalidBox(f"feature vector for {self.frame_id} has non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AlertLabel:
    """Failure/success label for one frame, alongside the mAP it came from."""

    frame_id: str
    per_frame_map: float
    label: str

    def __post_init__(self):
        if self.label not in (FAILURE, SUCCESS):
            raise InvalidBox(f"label must be '{FAILURE}' or '{SUCCESS}', got {self.label!r}")
        if not (math.isfinite(self.per_frame_map) and 0.0 <= self.per_frame_map <= 1.0):
            raise InvalidScore(f"per_frame_map {self.per_frame_map} outside [0, 1]")

    @property
    def is_failure(self) -> bool:
        return self.label == FAILURE


def validate_frame(record: FrameRecord) -> FrameRecord:
    """Return ``record`` iff every box and score satisfies its invariants.

    Construction already enforces the invariants, so this re-checks a record
    that may have been built through ``object.__new__`` tricks or arrived
    from deserialization paths; it is the single choke point callers can
    trust.
    """
    for gt in record.ground_truth:
        BoundingBox(gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2)
        if not gt.category:
            raise InvalidBox("ground-truth category must be non-empty")
    for det in record.detections:
        BoundingBox(det.box.x1, det.box.y1, det.box.x2, det.box.y2)
        if not det.category:
            raise InvalidBox("detection category must be non-empty")
        if not (math.isfinite(det.score) and 0.0 <= det.score <= 1.0):
            raise InvalidScore(f"score {det.score} outside [0, 1]")
    return record
