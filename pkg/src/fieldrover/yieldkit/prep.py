"""Dataset preparation pipeline: tile, negative crops, augment, split.

Operates on a directory of PNG images with sidecar .txt annotation files
and writes a new dataset directory plus a manifest recording every applied
operation and the seed, so outputs are reproducible byte for byte.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from ..seeds import stream_rng
from .annotations import AnnotatedImage, read_boxes, write_boxes
from .augment import augment, sample_params
from .emptyrect import EmptyResult, largest_empty_rect
from .split import stratified_split
from .tiling import remap_boxes_to_tile, split_tiles


def load_dataset(src_dir) -> list[tuple[AnnotatedImage, Path]]:
    """Pair every PNG with its annotation file (missing file = no boxes)."""
    src = Path(src_dir)
    items = []
    for img_path in sorted(src.glob("*.png")):
        ann_path = img_path.with_suffix(".txt")
        boxes = tuple(read_boxes(ann_path)) if ann_path.exists() else ()
        with Image.open(img_path) as im:
            width, height = im.size
        items.append(
            (AnnotatedImage(img_path.stem, width, height, boxes), img_path)
        )
    return items


def _save(out_dir: Path, image_id: str, pixels: np.ndarray, boxes) -> AnnotatedImage:
    Image.fromarray(pixels).save(out_dir / f"{image_id}.png")
    write_boxes(out_dir / f"{image_id}.txt", boxes)
    return AnnotatedImage(image_id, pixels.shape[1], pixels.shape[0], tuple(boxes))


def run_prep(
    src_dir,
    out_dir,
    operations: list[str],
    seed: int = 0,
    grid: tuple[int, int] = (3, 2),
    max_tile_px: int | None = 12_000_000,
    augment_copies: int = 3,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> dict:
    """Apply the requested operations in tile, negatives, augment, split order."""
    order = [op for op in ("tile", "negatives", "augment", "split") if op in operations]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images_dir = out / "images"
    images_dir.mkdir(exist_ok=True)

    current: list[AnnotatedImage] = []
    for annotated, img_path in load_dataset(src_dir):
        pixels = np.asarray(Image.open(img_path).convert("RGB"))
        current.append(_save(images_dir, annotated.image_id, pixels, annotated.ground_truth))

    manifest: dict = {"seed": seed, "operations": []}

    if "tile" in order:
        tiled: list[AnnotatedImage] = []
        for annotated in current:
            pixels = np.asarray(Image.open(images_dir / f"{annotated.image_id}.png"))
            tiles = split_tiles(annotated.width_px, annotated.height_px, grid, max_tile_px)
            for t_idx, tile in enumerate(tiles):
                tile_id = f"{annotated.image_id}_tile{t_idx}"
                crop = pixels[tile.y0 : tile.y1, tile.x0 : tile.x1]
                boxes = remap_boxes_to_tile(
                    list(annotated.ground_truth), annotated.width_px, annotated.height_px, tile
                )
                tiled.append(_save(images_dir, tile_id, crop, boxes))
            (images_dir / f"{annotated.image_id}.png").unlink()
            (images_dir / f"{annotated.image_id}.txt").unlink()
        current = tiled
        manifest["operations"].append({"op": "tile", "grid": list(grid), "tiles": len(current)})

    if "negatives" in order:
        negatives: list[AnnotatedImage] = []
        for annotated in current:
            try:
                rect = largest_empty_rect(annotated)
            except EmptyResult:
                continue
            x0 = math.ceil(rect.x0 * annotated.width_px)
            y0 = math.ceil(rect.y0 * annotated.height_px)
            x1 = math.floor(rect.x1 * annotated.width_px)
            y1 = math.floor(rect.y1 * annotated.height_px)
            if x1 - x0 < 1 or y1 - y0 < 1:
                continue
            pixels = np.asarray(Image.open(images_dir / f"{annotated.image_id}.png"))
            neg_id = f"{annotated.image_id}_neg"
            negatives.append(_save(images_dir, neg_id, pixels[y0:y1, x0:x1], []))
        current.extend(negatives)
        manifest["operations"].append({"op": "negatives", "crops": len(negatives)})

    if "augment" in order:
        rng = stream_rng(seed, "augment")
        augmented: list[AnnotatedImage] = []
        for annotated in current:
            pixels = np.asarray(Image.open(images_dir / f"{annotated.image_id}.png"))
            for k in range(augment_copies):
                params = sample_params(rng)
                aug_id = f"{annotated.image_id}_aug{k}"
                aug_seed = rng.randrange(2**32)
                augmented.append(
                    _save(images_dir, aug_id, augment(pixels, params, aug_seed), annotated.ground_truth)
                )
        current.extend(augmented)
        manifest["operations"].append(
            {"op": "augment", "copies_per_image": augment_copies, "added": len(augmented)}
        )

    if "split" in order:
        result = stratified_split(current, ratios, seed=stream_rng(seed, "split").randrange(2**32))
        for name, part in (("train", result.train), ("val", result.val), ("test", result.test)):
            (out / f"{name}.txt").write_text(
                "".join(f"images/{im.image_id}.png\n" for im in part), encoding="utf-8"
            )
        manifest["operations"].append(
            {
                "op": "split",
                "ratios": list(ratios),
                "sizes": list(result.sizes),
                "stratified": result.stratified,
            }
        )

    manifest["images"] = [
        {
            "image_id": im.image_id,
            "width_px": im.width_px,
            "height_px": im.height_px,
            "annotations": len(im.ground_truth),
        }
        for im in current
    ]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
