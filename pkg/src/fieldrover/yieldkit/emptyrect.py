"""Maximum-area axis-aligned rectangle avoiding every annotated box.

Used to crop one background (negative) sample out of each annotated image.
The optimum always has its edges on box-boundary coordinates, so the
search runs on the compressed coordinate grid: free cells are found once,
then every row span is swept for its widest free column runs. Exact, and
much cheaper than enumerating all candidate rectangles.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import UndefinedMetric
from .annotations import AnnotatedImage


class EmptyResult(UndefinedMetric):
    """Boxes cover the whole image; no empty rectangle exists."""


@dataclass(frozen=True)
class RectF:
    """Normalized rectangle [x0, x1] x [y0, y1] in image fractions."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def largest_empty_rect(image: AnnotatedImage) -> RectF:
    """Largest axis-aligned rectangle meeting no ground-truth box interior.

    Rectangles may share edges with boxes; only interior overlap counts.
    Ties break row-major on the smallest top-left corner, then the smallest
    bottom-right corner.
    """
    boxes = [b.corners for b in image.ground_truth]
    xs = sorted({0.0, 1.0, *(c[0] for c in boxes), *(c[2] for c in boxes)})
    ys = sorted({0.0, 1.0, *(c[1] for c in boxes), *(c[3] for c in boxes)})
    ncols = len(xs) - 1
    nrows = len(ys) - 1

    blocked = [[False] * ncols for _ in range(nrows)]
    for bx0, by0, bx1, by1 in boxes:
        for r in range(nrows):
            if by1 <= ys[r] or by0 >= ys[r + 1]:
                continue
            for c in range(ncols):
                if bx1 <= xs[c] or bx0 >= xs[c + 1]:
                    continue
                blocked[r][c] = True

    best_key = None
    best = None
    for r0 in range(nrows):
        span_free = [True] * ncols
        for r1 in range(r0, nrows):
            row = blocked[r1]
            for c in range(ncols):
                if row[c]:
                    span_free[c] = False
            height = ys[r1 + 1] - ys[r0]
            c = 0
            while c < ncols:
                if not span_free[c]:
                    c += 1
                    continue
                c_end = c
                while c_end + 1 < ncols and span_free[c_end + 1]:
                    c_end += 1
                width = xs[c_end + 1] - xs[c]
                key = (-width * height, ys[r0], xs[c], ys[r1 + 1], xs[c_end + 1])
                if best_key is None or key < best_key:
                    best_key = key
                    best = RectF(x0=xs[c], y0=ys[r0], x1=xs[c_end + 1], y1=ys[r1 + 1])
                c = c_end + 1
    if best is None:
        raise EmptyResult("ground-truth boxes cover the full image")
    return best
