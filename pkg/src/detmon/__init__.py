"""detmon: ground-truth-free performance monitoring for object detectors.

Predicts when a detector's per-frame mAP drops below a critical threshold
from features pooled out of its backbone activations, and quantifies the
risk reduction the resulting warnings buy.
"""

from . import alert, errors, features, io, labeling, map_eval, metrics, synth
from .alert import AlertArchitecture, AlertModel, TrainConfig
from .labeling import LabelingConfig
from .map_eval import MapConfig
from .metrics import RamConfig, ScoredFrame
from .model import (
    ActivationMap,
    AlertLabel,
    BoundingBox,
    Detection,
    FeatureVector,
    FrameRecord,
    GroundTruthObject,
    validate_frame,
)
from .synth import SynthConfig

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "AlertArchitecture",
    "AlertLabel",
    "AlertModel",
    "BoundingBox",
    "Detection",
    "FeatureVector",
    "FrameRecord",
    "GroundTruthObject",
    "LabelingConfig",
    "MapConfig",
    "RamConfig",
    "ScoredFrame",
    "SynthConfig",
    "TrainConfig",
    "alert",
    "errors",
    "features",
    "io",
    "labeling",
    "map_eval",
    "metrics",
    "synth",
    "validate_frame",
    "__version__",
]
