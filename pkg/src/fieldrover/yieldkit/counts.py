"""Mission-level yield counting: detections joined to capture locations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..mission import GeotagRecord
from ..world import GeoAnchor
from .boxes import BoundingBox, DEFAULT_EVAL, EvalConfig


@dataclass(frozen=True)
class ImageYield:
    image_id: str
    count: int
    x: float
    y: float
    t: float
    fix_type: str
    waypoint_index: int


@dataclass(frozen=True)
class YieldReport:
    per_image: tuple[ImageYield, ...]
    total: int
    skipped: tuple[str, ...]  # image ids with detections but no geotag


def yield_count(
    detections: Mapping[str, Sequence[BoundingBox]],
    cfg: EvalConfig = DEFAULT_EVAL,
    geotags: Sequence[GeotagRecord] = (),
) -> YieldReport:
    """Count above-threshold detections per image and join to geotags.

    Detections whose image_id has no geotag are reported as skipped rather
    than failing the run; the total sums only located images.
    """
    by_id = {rec.image_id: rec for rec in geotags}
    per_image = []
    skipped = []
    for image_id in sorted(detections):
        count = sum(
            1
            for b in detections[image_id]
            if b.confidence is not None and b.confidence >= cfg.confidence_threshold
        )
        rec = by_id.get(image_id)
        if rec is None:
            skipped.append(image_id)
            continue
        per_image.append(
            ImageYield(
                image_id=image_id,
                count=count,
                x=rec.fix.est_x,
                y=rec.fix.est_y,
                t=rec.t,
                fix_type=rec.fix.fix_type.value,
                waypoint_index=rec.waypoint_index,
            )
        )
    total = sum(item.count for item in per_image)
    return YieldReport(per_image=tuple(per_image), total=total, skipped=tuple(skipped))


def yield_geojson(report: YieldReport, anchor: GeoAnchor | None = None) -> str:
    """GeoJSON point collection matching the geotag export, plus counts."""
    features = []
    for item in report.per_image:
        if anchor is not None:
            lat, lon = anchor.to_geo(item.x, item.y)
            coords = [lon, lat]
        else:
            coords = [item.x, item.y]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": coords},
                "properties": {
                    "image_id": item.image_id,
                    "t": item.t,
                    "fix_type": item.fix_type,
                    "waypoint_index": item.waypoint_index,
                    "count": item.count,
                },
            }
        )
    doc = {
        "type": "FeatureCollection",
        "features": features,
        "properties": {"total": report.total, "skipped": list(report.skipped)},
    }
    return json.dumps(doc, indent=2) + "\n"
