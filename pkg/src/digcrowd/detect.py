"""Grid-detector decode: scored boxes from S x S x (B*5+C) prediction tensors.

Tensors are produced offline (an external network or the synthetic oracle);
this module only turns them into boxes. Per cell there are B tuples
(x, y, w, h, c) followed by C class probabilities: x, y are offsets within
the cell, w, h are fractions of the image, and the final score of a box is
the product of its confidence c with the largest class probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .scene import BoundingBox, GridShape

__all__ = [
    "DetectorGridSpec",
    "GridPrediction",
    "DetectionSet",
    "combine_confidence",
    "decode",
    "iou",
    "nms",
]

log = logging.getLogger("digcrowd.detect")

DEFAULT_SCORE_THRESHOLD = 0.2
DEFAULT_NMS_IOU = 0.5


@dataclass(frozen=True)
class DetectorGridSpec:
    """Grid geometry: S cells per side, B boxes per cell, C classes."""

    s: int = 7
    b: int = 2
    c: int = 1

    def __post_init__(self):
        if min(self.s, self.b, self.c) < 1:
            raise ConfigError(f"grid spec values must be >= 1, got {self}")

    @property
    def cell_values(self) -> int:
        return self.b * 5 + self.c


@dataclass(frozen=True, eq=False)
class GridPrediction:
    """Raw prediction tensor tied to the image extent it was made for.

    Values are kept as delivered; decode clamps out-of-range entries with a
    warning instead of rejecting the tensor.
    """

    spec: DetectorGridSpec
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        expected = (self.spec.s, self.spec.s, self.spec.cell_values)
        if vals.shape != expected:
            raise FormatError(
                f"prediction tensor shape {vals.shape} does not match {expected}"
            )
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_flat(
        cls, spec: DetectorGridSpec, shape: GridShape, flat: np.ndarray
    ) -> "GridPrediction":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        expected = spec.s * spec.s * spec.cell_values
        if flat.size != expected:
            raise FormatError(
                f"prediction tensor has {flat.size} values, expected {expected}"
            )
        return cls(spec, shape, flat.reshape(spec.s, spec.s, spec.cell_values))


@dataclass(frozen=True)
class DetectionSet:
    """Scored boxes for one scene, tagged with their provenance."""

    boxes: tuple[BoundingBox, ...] = ()
    source: str = "external"
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self) -> int:
        return len(self.boxes)


def combine_confidence(class_prob: float, box_conf: float) -> float:
    """Class-specific confidence: class probability times box confidence."""
    if not (0.0 <= class_prob <= 1.0 and 0.0 <= box_conf <= 1.0):
        raise ConfigError("confidence inputs must lie in [0, 1]")
    return class_prob * box_conf


def decode(pred: GridPrediction, score_threshold: float = DEFAULT_SCORE_THRESHOLD) -> DetectionSet:
    """Boxes with score >= threshold, in image pixels, clamped to the frame.

    Box centers sit at ((col + x) * width / S, (row + y) * height / S).
    Boxes with no pixel extent (w or h decoding to zero) are dropped.
    """
    spec = pred.spec
    vals = pred.values
    warnings: list[str] = []
    finite = np.isfinite(vals)
    if not finite.all():
        warnings.append(f"{int((~finite).sum())} non-finite tensor values treated as 0")
        vals = np.where(finite, vals, 0.0)
    out_of_range = int(((vals < 0.0) | (vals > 1.0)).sum())
    if out_of_range:
        warnings.append(f"{out_of_range} tensor values clamped to [0, 1]")
        vals = np.clip(vals, 0.0, 1.0)
    for msg in warnings:
        log.warning("decode: %s", msg)

    width, height = float(pred.shape.width), float(pred.shape.height)
    boxes = []
    for row in range(spec.s):
        for col in range(spec.s):
            cell = vals[row, col]
            class_prob = float(cell[spec.b * 5 :].max())
            for b in range(spec.b):
                x, y, w, h, conf = cell[b * 5 : b * 5 + 5]
                score = combine_confidence(class_prob, float(conf))
                if score < score_threshold:
                    continue
                cx = (col + float(x)) * width / spec.s
                cy = (row + float(y)) * height / spec.s
                half_w = float(w) * width / 2.0
                half_h = float(h) * height / 2.0
                x_min = max(0.0, cx - half_w)
                y_min = max(0.0, cy - half_h)
                x_max = min(width, cx + half_w)
                y_max = min(height, cy + half_h)
                if x_max <= x_min or y_max <= y_min:
                    continue
                boxes.append(BoundingBox(x_min, y_min, x_max, y_max, score))
    return DetectionSet(tuple(boxes), source="external", warnings=tuple(warnings))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def nms(dets: DetectionSet, iou_threshold: float = DEFAULT_NMS_IOU) -> DetectionSet:
    """Greedy suppression: keep a box iff it overlaps no kept box >= threshold.

    Candidates are visited by descending score, ties broken by smaller
    x_min then y_min so repeated runs produce identical counts.
    """
    order = sorted(dets.boxes, key=lambda bb: (-bb.score, bb.x_min, bb.y_min))
    kept: list[BoundingBox] = []
    for box in order:
        if all(iou(box, other) < iou_threshold for other in kept):
            kept.append(box)
    return DetectionSet(tuple(kept), source=dets.source, warnings=dets.warnings)
