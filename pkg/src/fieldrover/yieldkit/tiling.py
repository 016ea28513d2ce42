"""Tiling of large captures into upload-sized parts with box remapping."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import InvalidParameter
from .boxes import BoundingBox


@dataclass(frozen=True)
class TileRect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height


def split_tiles(
    width_px: int,
    height_px: int,
    grid: tuple[int, int] = (3, 2),
    max_tile_px: int | None = None,
) -> list[TileRect]:
    """Partition an image into cols x rows = 6 near-equal integer tiles.

    Tiles cover the image exactly with no gaps or overlap; when a dimension
    does not divide evenly the remainder pixels go to the last column/row.
    Tiles are returned row-major. max_tile_px, when given, caps the largest
    tile (upload-size limits).
    """
    cols, rows = grid
    if cols < 1 or rows < 1 or cols * rows != 6:
        raise InvalidParameter(f"grid {grid} impossible: need cols*rows == 6")
    if width_px < 6 or height_px < 6:
        raise InvalidParameter("image must be at least 6 px on each side")
    xs = [i * width_px // cols for i in range(cols + 1)]
    ys = [j * height_px // rows for j in range(rows + 1)]
    tiles = [
        TileRect(xs[c], ys[r], xs[c + 1], ys[r + 1])
        for r in range(rows)
        for c in range(cols)
    ]
    if max_tile_px is not None:
        biggest = max(t.area for t in tiles)
        if biggest > max_tile_px:
            raise InvalidParameter(
                f"largest tile {biggest} px exceeds the {max_tile_px} px cap"
            )
    return tiles


def remap_boxes_to_tile(
    boxes: list[BoundingBox],
    src_width_px: int,
    src_height_px: int,
    tile: TileRect,
) -> list[BoundingBox]:
    """Clip normalized source boxes to a tile and renormalize to tile frame.

    A box lands on every tile it properly overlaps; the clipped part is kept
    whenever it has positive area.
    """
    out = []
    for box in boxes:
        x0, y0, x1, y1 = box.corners
        px0, py0 = x0 * src_width_px, y0 * src_height_px
        px1, py1 = x1 * src_width_px, y1 * src_height_px
        cx0 = max(px0, tile.x0)
        cy0 = max(py0, tile.y0)
        cx1 = min(px1, tile.x1)
        cy1 = min(py1, tile.y1)
        if cx1 - cx0 <= 0 or cy1 - cy0 <= 0:
            continue
        w = (cx1 - cx0) / tile.width
        h = (cy1 - cy0) / tile.height
        cx = ((cx0 + cx1) / 2.0 - tile.x0) / tile.width
        cy = ((cy0 + cy1) / 2.0 - tile.y0) / tile.height
        out.append(BoundingBox(cx, cy, w, h, confidence=box.confidence, label=box.label))
    return out
