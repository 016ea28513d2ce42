import random

import pytest

from fieldrover.errors import InvalidParameter
from fieldrover.yieldkit.boxes import BoundingBox
from fieldrover.yieldkit.tiling import TileRect, remap_boxes_to_tile, split_tiles


class TestSplitTiles:
    def test_camera_native_dimensions(self):
        # 64MP capture split for a 12MP upload cap
        tiles = split_tiles(9152, 6944, grid=(3, 2), max_tile_px=12_000_000)
        assert len(tiles) == 6
        widths = sorted({t.width for t in tiles})
        heights = sorted({t.height for t in tiles})
        assert widths == [3050, 3051]
        assert heights == [3472]
        row0 = [t for t in tiles if t.y0 == 0]
        assert [t.width for t in row0] == [3050, 3051, 3051]
        assert max(t.area for t in tiles) == 3051 * 3472 == 10_593_072
        assert sum(t.area for t in tiles) == 9152 * 6944

    def test_exact_division(self):
        tiles = split_tiles(600, 600, grid=(3, 2))
        assert all(t.width == 200 and t.height == 300 for t in tiles)

    def test_partition_fuzz(self):
        rng = random.Random(404)
        for _ in range(200):
            w = rng.randint(6, 10_000)
            h = rng.randint(6, 10_000)
            cols, rows = rng.choice([(3, 2), (2, 3), (6, 1), (1, 6)])
            tiles = split_tiles(w, h, grid=(cols, rows))
            assert sum(t.area for t in tiles) == w * h
            # pairwise disjoint (half-open rectangles)
            for i, a in enumerate(tiles):
                for b in tiles[i + 1 :]:
                    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
                    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
                    assert ix <= 0 or iy <= 0
            # edges cover [0, w] x [0, h]
            assert min(t.x0 for t in tiles) == 0 and max(t.x1 for t in tiles) == w
            assert min(t.y0 for t in tiles) == 0 and max(t.y1 for t in tiles) == h

    def test_union_area_oracle(self):
        rng = random.Random(17)
        for _ in range(100):
            w, h = rng.randint(6, 500), rng.randint(6, 500)
            tiles = split_tiles(w, h)
            covered = sum(t.area for t in tiles)
            assert covered == w * h

    def test_impossible_grid(self):
        with pytest.raises(InvalidParameter):
            split_tiles(100, 100, grid=(2, 2))
        with pytest.raises(InvalidParameter):
            split_tiles(100, 100, grid=(0, 6))

    def test_too_small_image(self):
        with pytest.raises(InvalidParameter):
            split_tiles(5, 100)

    def test_tile_cap_enforced(self):
        with pytest.raises(InvalidParameter):
            split_tiles(9152, 6944, grid=(3, 2), max_tile_px=10_000_000)


def oracle_remap(boxes, src_w, src_h, tile):
    """Rectangle-intersection oracle in pixel space."""
    out = []
    for b in boxes:
        x0, y0, x1, y1 = b.corners
        px0, py0, px1, py1 = x0 * src_w, y0 * src_h, x1 * src_w, y1 * src_h
        ix0, iy0 = max(px0, tile.x0), max(py0, tile.y0)
        ix1, iy1 = min(px1, tile.x1), min(py1, tile.y1)
        if ix1 > ix0 and iy1 > iy0:
            out.append((ix0 - tile.x0, iy0 - tile.y0, ix1 - tile.x0, iy1 - tile.y0))
    return out


class TestRemap:
    def test_boxes_reassigned_by_intersection(self):
        rng = random.Random(5)
        src_w, src_h = 907, 641
        tiles = split_tiles(src_w, src_h)
        for _ in range(50):
            boxes = []
            for _ in range(rng.randint(1, 10)):
                w = rng.uniform(0.01, 0.3)
                h = rng.uniform(0.01, 0.3)
                boxes.append(
                    BoundingBox(
                        rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h
                    )
                )
            total_clipped = 0
            for tile in tiles:
                remapped = remap_boxes_to_tile(boxes, src_w, src_h, tile)
                expected = oracle_remap(boxes, src_w, src_h, tile)
                assert len(remapped) == len(expected)
                total_clipped += len(remapped)
                for got, exp in zip(remapped, expected):
                    ex0, ey0, ex1, ey1 = exp
                    gx0, gy0, gx1, gy1 = got.corners
                    assert gx0 * tile.width == pytest.approx(ex0, abs=1e-6)
                    assert gy0 * tile.height == pytest.approx(ey0, abs=1e-6)
                    assert gx1 * tile.width == pytest.approx(ex1, abs=1e-6)
                    assert gy1 * tile.height == pytest.approx(ey1, abs=1e-6)
            assert total_clipped >= len(boxes)

    def test_fully_inside_tile_unchanged_shape(self):
        tile = TileRect(0, 0, 100, 100)
        b = BoundingBox(0.2, 0.2, 0.1, 0.1)
        out = remap_boxes_to_tile([b], 300, 300, tile)
        assert len(out) == 1
        assert out[0].w == pytest.approx(0.3)
        assert out[0].h == pytest.approx(0.3)
