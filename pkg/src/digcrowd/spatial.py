"""Spatial constraint: drop detections whose box center lies in the far region.

Boxes straddling the split line get counted twice (once by the detector,
once by the density integral), so any detection whose center falls strictly
above the polyline is deleted. Centers exactly on the line stay with the
detector; the far mask uses the complementary strict region.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .detect import DetectionSet
from .errors import PolylineDomainError
from .scene import BoundingBox, Polyline

__all__ = ["DeletedBox", "FilterReport", "box_center", "apply_spatial_constraint"]

log = logging.getLogger("digcrowd.spatial")


@dataclass(frozen=True)
class DeletedBox:
    box: BoundingBox
    center: tuple[float, float]
    segment_index: int


@dataclass(frozen=True)
class FilterReport:
    """Kept/deleted split of one scene's detections."""

    kept: DetectionSet
    deleted: tuple[DeletedBox, ...]
    scene_id: str = ""
    warnings: tuple[str, ...] = ()


def box_center(b: BoundingBox) -> tuple[float, float]:
    return ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)


def apply_spatial_constraint(
    dets: DetectionSet, p: Polyline, scene_id: str = ""
) -> FilterReport:
    """Delete boxes whose center satisfies y_c < k_i * x_c + b_i.

    Centers outside the polyline's x-domain are kept and flagged rather
    than deleted: dropping a detection on missing information would
    undercount.
    """
    kept: list[BoundingBox] = []
    deleted: list[DeletedBox] = []
    warnings: list[str] = []
    for box in dets.boxes:
        xc, yc = box_center(box)
        try:
            seg = p.segment_index(xc)
        except PolylineDomainError:
            warnings.append(
                f"box center x={xc:.2f} outside polyline domain; box kept"
            )
            kept.append(box)
            continue
        line_y = p.segments[seg].k * xc + p.segments[seg].b
        if yc < line_y:
            deleted.append(DeletedBox(box, (xc, yc), seg))
        else:
            kept.append(box)
    for msg in warnings:
        log.warning("spatial filter (%s): %s", scene_id or "scene", msg)
    return FilterReport(
        kept=DetectionSet(tuple(kept), source=dets.source, warnings=dets.warnings),
        deleted=tuple(deleted),
        scene_id=scene_id,
        warnings=tuple(warnings),
    )
