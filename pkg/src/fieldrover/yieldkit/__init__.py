"""Dataset preparation and detection-evaluation toolkit."""

from .boxes import BoundingBox, ConfusionMatrix, EvalConfig, accuracy, iou, match_detections
from .metrics import average_precision, map_range

__all__ = [
    "BoundingBox",
    "ConfusionMatrix",
    "EvalConfig",
    "accuracy",
    "iou",
    "match_detections",
    "average_precision",
    "map_range",
]
