"""Line-oriented annotation files and the dataset manifest.

One box per line: `class cx cy w h` normalized, predictions append a
confidence column. A sidecar manifest JSON records image dimensions so
boxes can be mapped back to pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import AnnotationFormatError
from .boxes import BoundingBox

CLASS_NAMES = ("pistachio",)


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    width_px: int
    height_px: int
    ground_truth: tuple[BoundingBox, ...] = ()

    @property
    def is_negative(self) -> bool:
        # an empty annotation file marks a background-only sample
        return len(self.ground_truth) == 0


def format_box_line(box: BoundingBox, with_confidence: bool = False) -> str:
    parts = ["0", repr(box.cx), repr(box.cy), repr(box.w), repr(box.h)]
    if with_confidence:
        parts.append(repr(box.confidence))
    return " ".join(parts)


def write_boxes(path, boxes, with_confidence: bool = False) -> None:
    lines = [format_box_line(b, with_confidence) for b in boxes]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def parse_box_line(line: str, path, line_no: int, with_confidence: bool) -> BoundingBox:
    parts = line.split()
    expected = 6 if with_confidence else 5
    if len(parts) != expected:
        raise AnnotationFormatError(path, line_no, f"expected {expected} fields, got {len(parts)}")
    try:
        cls = int(parts[0])
        values = [float(v) for v in parts[1:]]
    except ValueError as exc:
        raise AnnotationFormatError(path, line_no, str(exc)) from exc
    if cls != 0:
        raise AnnotationFormatError(path, line_no, f"unknown class index {cls}")
    try:
        if with_confidence:
            return BoundingBox(values[0], values[1], values[2], values[3], confidence=values[4])
        return BoundingBox(values[0], values[1], values[2], values[3])
    except ValueError as exc:
        raise AnnotationFormatError(path, line_no, str(exc)) from exc


def read_boxes(path, with_confidence: bool = False) -> list[BoundingBox]:
    boxes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            boxes.append(parse_box_line(line, path, line_no, with_confidence))
    return boxes


def read_annotation_dir(directory, with_confidence: bool = False) -> dict[str, list[BoundingBox]]:
    """Map image_id (file stem) to its box list for every .txt in a directory."""
    out: dict[str, list[BoundingBox]] = {}
    for path in sorted(Path(directory).glob("*.txt")):
        out[path.stem] = read_boxes(path, with_confidence)
    return out


def write_manifest(path, images: list[AnnotatedImage], extra: dict | None = None) -> None:
    doc = {
        "class_names": list(CLASS_NAMES),
        "images": [
            {
                "image_id": im.image_id,
                "width_px": im.width_px,
                "height_px": im.height_px,
                "annotations": len(im.ground_truth),
            }
            for im in images
        ],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
