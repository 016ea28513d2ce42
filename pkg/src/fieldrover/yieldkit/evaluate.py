"""Whole-dataset evaluation report: confusion, accuracy, AP50, mAP50-95."""

from __future__ import annotations

from typing import Mapping, Sequence

from ..errors import UndefinedMetric
from .boxes import BoundingBox, ConfusionMatrix, DEFAULT_EVAL, EvalConfig, accuracy, match_detections
from .metrics import average_precision, map_range


def evaluate_detections(
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    preds_by_image: Mapping[str, Sequence[BoundingBox]],
    cfg: EvalConfig = DEFAULT_EVAL,
) -> dict:
    """Evaluate predictions against ground truth over the id union.

    The confusion matrix applies the confidence threshold; AP metrics rank
    all predictions. Raises UndefinedMetric when there is no ground truth
    at all.
    """
    ids = sorted(set(gts_by_image) | set(preds_by_image))
    total = ConfusionMatrix()
    per_image = []
    for image_id in ids:
        gt = list(gts_by_image.get(image_id, ()))
        pred = list(preds_by_image.get(image_id, ()))
        m, _ = match_detections(pred, gt, cfg)
        total = total + m
        per_image.append(
            {"image_id": image_id, "tp": m.tp, "fn": m.fn, "fp": m.fp}
        )
    if total.tp + total.fn == 0:
        raise UndefinedMetric("no ground-truth boxes in the dataset")
    gts = {k: list(v) for k, v in gts_by_image.items()}
    preds = {k: list(v) for k, v in preds_by_image.items()}
    return {
        "confusion": {"tp": total.tp, "fn": total.fn, "fp": total.fp},
        "accuracy_pct": accuracy(total),
        "ap50": average_precision(preds, gts, 0.50),
        "map50_95": map_range(preds, gts, cfg),
        "per_image": per_image,
        "config": {
            "confidence_threshold": cfg.confidence_threshold,
            "iou_threshold": cfg.iou_threshold,
        },
    }
