"""Average precision over ranked detections and the 0.50-0.95 IoU sweep.

AP ranks every prediction by confidence (no confidence threshold is
applied), greedily assigns each to ground truth within its own image, and
integrates the all-point interpolated precision-recall curve. Scores only
rank: scaling all confidences by a positive factor leaves AP unchanged.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from ..errors import InvalidParameter, UndefinedMetric
from .boxes import BoundingBox, DEFAULT_EVAL, EvalConfig, iou


def _ranked_predictions(
    preds_by_image: Mapping[str, Sequence[BoundingBox]]
) -> list[tuple[str, int, BoundingBox]]:
    entries = []
    for image_id in sorted(preds_by_image):
        for idx, p in enumerate(preds_by_image[image_id]):
            if p.confidence is None:
                raise InvalidParameter(f"{image_id}: prediction without confidence")
            entries.append((image_id, idx, p))
    entries.sort(key=lambda e: (-e[2].confidence, e[0], e[1]))
    return entries


def _pr_points(
    preds_by_image: Mapping[str, Sequence[BoundingBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    iou_thr: float,
) -> tuple[list[int], int]:
    """Per-rank hit flags (1 = TP) and the total ground-truth count."""
    total_gt = sum(len(v) for v in gts_by_image.values())
    taken: dict[str, set[int]] = {k: set() for k in gts_by_image}
    flags: list[int] = []
    for image_id, _, p in _ranked_predictions(preds_by_image):
        gts = gts_by_image.get(image_id, ())
        used = taken.setdefault(image_id, set())
        best_j = -1
        best_iou = 0.0
        for j, g in enumerate(gts):
            if j in used:
                continue
            v = iou(p, g)
            if v >= iou_thr and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            used.add(best_j)
            flags.append(1)
        else:
            flags.append(0)
    return flags, total_gt


def _integrate_pr(flags: list[int], total_gt: int) -> float:
    tp = fp = 0
    recalls = [0.0]
    precisions = [1.0]
    for hit in flags:
        tp += hit
        fp += 1 - hit
        recalls.append(tp / total_gt)
        precisions.append(tp / (tp + fp))
    # all-point interpolation: precision envelope from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for i in range(1, len(recalls)):
        ap += (recalls[i] - recalls[i - 1]) * precisions[i]
    return ap


def average_precision(
    preds_by_image: Mapping[str, Sequence[BoundingBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    iou_thr: float = 0.50,
) -> float:
    flags, total_gt = _pr_points(preds_by_image, gts_by_image, iou_thr)
    if total_gt == 0:
        raise UndefinedMetric("AP undefined without ground-truth boxes")
    if not flags:
        return 0.0
    return _integrate_pr(flags, total_gt)


def map_range(
    preds_by_image: Mapping[str, Sequence[BoundingBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    cfg: EvalConfig = DEFAULT_EVAL,
) -> float:
    """Mean AP over the IoU threshold grid (0.50 to 0.95, step 0.05)."""
    aps = [average_precision(preds_by_image, gts_by_image, thr) for thr in cfg.map_iou_grid]
    return sum(aps) / len(aps)
