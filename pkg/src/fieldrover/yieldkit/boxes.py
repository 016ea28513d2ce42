"""Bounding boxes, IoU, greedy matching and the TP/FN/FP confusion matrix.

Single-class detection bookkeeping: background regions are unbounded, so
true negatives are never counted; the matrix carries tn fixed at zero and
every metric respects that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import InvalidParameter, UndefinedMetric

_EPS = 1e-9


@dataclass(frozen=True)
class BoundingBox:
    """Center-format box in normalized [0, 1] image fractions."""

    cx: float
    cy: float
    w: float
    h: float
    confidence: float | None = None
    label: str = "pistachio"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidParameter("box width and height must be positive")
        x0, y0, x1, y1 = self.corners
        if x0 < -_EPS or y0 < -_EPS or x1 > 1 + _EPS or y1 > 1 + _EPS:
            raise InvalidParameter(f"box not inside the unit square: {self}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise InvalidParameter("confidence must lie in [0, 1]")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area, in [0, 1].

    Areas are computed from the same corner values as the intersection so
    that iou(a, a) is exactly 1.0.
    """
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0

    # background is an unbounded region; true negatives are not counted
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp) < 0:
            raise InvalidParameter("confusion counts must be non-negative")
        if self.tn != 0:
            raise InvalidParameter("tn is fixed at zero in this convention")

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp)


@dataclass(frozen=True)
class EvalConfig:
    confidence_threshold: float = 0.25
    iou_threshold: float = 0.70
    map_iou_grid: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

    def __post_init__(self):
        for name in ("confidence_threshold", "iou_threshold"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidParameter(f"{name} must lie in (0, 1)")


DEFAULT_EVAL = EvalConfig()


@dataclass(frozen=True)
class Match:
    pred_index: int  # index into the original prediction list
    gt_index: int
    iou: float


def match_detections(
    pred: list[BoundingBox],
    gt: list[BoundingBox],
    cfg: EvalConfig = DEFAULT_EVAL,
) -> tuple[ConfusionMatrix, list[Match]]:
    """Greedy confidence-ordered matching for one image.

    Predictions below the confidence threshold are discarded. Survivors are
    taken in descending confidence (ties keep input order) and each grabs
    the unmatched ground-truth box with the highest IoU at or above the IoU
    threshold (IoU ties go to the lower ground-truth index). Matched pairs
    are TP, leftover ground truth FN, leftover survivors FP.
    """
    for p in pred:
        if p.confidence is None:
            raise InvalidParameter("predictions must carry confidences")
    survivors = [(i, p) for i, p in enumerate(pred) if p.confidence >= cfg.confidence_threshold]
    survivors.sort(key=lambda ip: -ip[1].confidence)  # stable: ties keep input order
    taken: set[int] = set()
    matches: list[Match] = []
    for i, p in survivors:
        best_j = -1
        best_iou = 0.0
        for j, g in enumerate(gt):
            if j in taken:
                continue
            v = iou(p, g)
            if v >= cfg.iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            taken.add(best_j)
            matches.append(Match(pred_index=i, gt_index=best_j, iou=best_iou))
    tp = len(matches)
    return ConfusionMatrix(tp=tp, fn=len(gt) - tp, fp=len(survivors) - tp), matches


def accuracy(m: ConfusionMatrix) -> float:
    """Percentage accuracy: 100 * (tp + tn) / (tp + fn + fp + tn)."""
    total = m.tp + m.fn + m.fp + m.tn
    if total == 0:
        raise UndefinedMetric("accuracy undefined for an all-zero matrix")
    return 100.0 * (m.tp + m.tn) / total
