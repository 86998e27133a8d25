"""File formats consumed and emitted by the pipeline.

Binary formats (all little-endian, payload row-major float32):

==========  ==========================================================
depth       magic ``DIGD`` + u32 width + u32 height + u32 reserved
            (16-byte header), then width*height floats in [0, 1];
            16-bit grayscale PGM (P5, maxval 65535) also accepted
tensor      magic ``DIGY`` + u32 S + u32 B + u32 C + u32 width +
            u32 height (24-byte header), then S*S*(B*5+C) floats,
            cell-major with the B box tuples before class probs
density     magic ``DIGF`` + u32 width + u32 height + u64 reserved
            (20-byte header), then width*height floats
==========  ==========================================================

Text formats: detection lists (one ``x_min y_min x_max y_max score`` per
line), annotation / scene-config / manifest JSON.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .density import DensityField
from .detect import DetectorGridSpec, GridPrediction, DetectionSet
from .errors import ConfigError, FormatError
from .scene import (
    BoundingBox,
    DepthMap,
    GridShape,
    HeadPoint,
    Polyline,
    PolySegment,
    SceneConfig,
)

__all__ = [
    "read_depth",
    "read_depth_digd",
    "write_depth_digd",
    "read_depth_pgm16",
    "write_depth_pgm16",
    "read_prediction_tensor",
    "write_prediction_tensor",
    "read_density_field",
    "write_density_field",
    "read_detections_text",
    "write_detections_text",
    "read_annotations",
    "write_annotations",
    "read_scene_config",
    "write_scene_config",
    "write_pgm8",
    "heatmap_u8",
]

log = logging.getLogger("digcrowd.io")

DIGD_MAGIC = b"DIGD"
DIGY_MAGIC = b"DIGY"
DIGF_MAGIC = b"DIGF"


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


def _payload_f32(data: bytes, offset: int, count: int, path) -> np.ndarray:
    expected = offset + 4 * count
    if len(data) != expected:
        raise FormatError(
            f"{path}: payload is {len(data) - offset} bytes, expected {4 * count}"
        )
    return np.frombuffer(data, dtype="<f4", offset=offset).astype(np.float64)


# -- depth ------------------------------------------------------------------

def write_depth_digd(path, depth: DepthMap) -> None:
    header = struct.pack("<4sIII", DIGD_MAGIC, depth.shape.width, depth.shape.height, 0)
    Path(path).write_bytes(header + depth.values.astype("<f4").tobytes())


def read_depth_digd(path) -> DepthMap:
    data = _read_bytes(path)
    if len(data) < 16 or data[:4] != DIGD_MAGIC:
        raise FormatError(f"{path}: not a DIGD depth file")
    _, width, height, _ = struct.unpack("<4sIII", data[:16])
    shape = GridShape(width, height)
    values = _payload_f32(data, 16, shape.pixel_count, path)
    try:
        return DepthMap(shape, values.reshape(height, width))
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_depth_pgm16(path, depth: DepthMap) -> None:
    quantized = np.round(depth.values * 65535.0).astype(">u2")
    header = f"P5\n{depth.shape.width} {depth.shape.height}\n65535\n".encode()
    Path(path).write_bytes(header + quantized.tobytes())


def read_depth_pgm16(path) -> DepthMap:
    data = _read_bytes(path)
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 3:
        raise FormatError(f"{path}: truncated PGM header")
    width, height, maxval = (int(f) for f in fields)
    pos += 1  # single whitespace after maxval
    if maxval != 65535:
        raise FormatError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    shape = GridShape(width, height)
    raw = np.frombuffer(data, dtype=">u2", offset=pos)
    if raw.size != shape.pixel_count:
        raise FormatError(f"{path}: PGM payload size mismatch")
    return DepthMap(shape, raw.reshape(height, width).astype(np.float64) / 65535.0)


def read_depth(path) -> DepthMap:
    """Load depth from a DIGD or 16-bit PGM file (sniffed by magic)."""
    with Path(path).open("rb") as fh:
        head = fh.read(4)
    if head[:4] == DIGD_MAGIC:
        return read_depth_digd(path)
    if head[:2] == b"P5":
        return read_depth_pgm16(path)
    raise FormatError(f"{path}: unrecognized depth format (expect DIGD or P5)")


# -- prediction tensor ------------------------------------------------------

def write_prediction_tensor(path, pred: GridPrediction) -> None:
    header = struct.pack(
        "<4sIIIII",
        DIGY_MAGIC,
        pred.spec.s,
        pred.spec.b,
        pred.spec.c,
        pred.shape.width,
        pred.shape.height,
    )
    Path(path).write_bytes(header + pred.values.astype("<f4").tobytes())


def read_prediction_tensor(path) -> GridPrediction:
    data = _read_bytes(path)
    if len(data) < 24 or data[:4] != DIGY_MAGIC:
        raise FormatError(f"{path}: not a DIGY prediction tensor")
    _, s, b, c, width, height = struct.unpack("<4sIIIII", data[:24])
    try:
        spec = DetectorGridSpec(s, b, c)
        shape = GridShape(width, height)
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    values = _payload_f32(data, 24, s * s * spec.cell_values, path)
    return GridPrediction.from_flat(spec, shape, values)


# -- density field ----------------------------------------------------------

def write_density_field(path, field: DensityField) -> None:
    header = struct.pack(
        "<4sIIQ", DIGF_MAGIC, field.shape.width, field.shape.height, 0
    )
    Path(path).write_bytes(header + field.values.astype("<f4").tobytes())


def read_density_field(path) -> DensityField:
    data = _read_bytes(path)
    if len(data) < 20 or data[:4] != DIGF_MAGIC:
        raise FormatError(f"{path}: not a DIGF density file")
    _, width, height, _ = struct.unpack("<4sIIQ", data[:20])
    shape = GridShape(width, height)
    values = _payload_f32(data, 20, shape.pixel_count, path)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: density file contains non-finite values")
    negatives = int((values < 0).sum())
    if negatives:
        # external predictors sometimes emit slightly negative densities
        log.warning("%s: clamped %d negative density values to 0", path, negatives)
        values = np.clip(values, 0.0, None)
    return DensityField(shape, values.reshape(height, width))


# -- text detections --------------------------------------------------------

def write_detections_text(path, dets: DetectionSet) -> None:
    lines = [
        f"{b.x_min!r} {b.y_min!r} {b.x_max!r} {b.y_max!r} {b.score!r}"
        for b in dets.boxes
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_detections_text(path, source: str = "external") -> DetectionSet:
    boxes = []
    warnings = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FormatError(
                f"{path}:{lineno}: expected 'x_min y_min x_max y_max score'"
            )
        try:
            x0, y0, x1, y1, score = (float(p) for p in parts)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if not (0.0 <= score <= 1.0):
            warnings.append(f"line {lineno}: score {score} clamped to [0, 1]")
            score = min(max(score, 0.0), 1.0)
        try:
            boxes.append(BoundingBox(x0, y0, x1, y1, score))
        except ConfigError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    for msg in warnings:
        log.warning("%s: %s", path, msg)
    return DetectionSet(tuple(boxes), source=source, warnings=tuple(warnings))


# -- annotations ------------------------------------------------------------

def write_annotations(path, heads, count: float) -> None:
    payload = {
        "heads": [{"x": h.x, "y": h.y} for h in heads],
        "count": count,
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def read_annotations(path) -> tuple[tuple[HeadPoint, ...], float]:
    try:
        payload = json.loads(Path(path).read_text())
        heads = tuple(HeadPoint(float(h["x"]), float(h["y"])) for h in payload["heads"])
        count = float(payload["count"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad annotation file: {exc}") from exc
    if heads and count != len(heads):
        raise FormatError(f"{path}: count {count} != {len(heads)} heads")
    return heads, count


# -- scene config -----------------------------------------------------------

def write_scene_config(path, cfg: SceneConfig) -> None:
    payload = {
        "scene_id": cfg.scene_id,
        "polyline": None
        if cfg.polyline is None
        else [
            {"x_start": s.x_start, "x_end": s.x_end, "k": s.k, "b": s.b}
            for s in cfg.polyline.segments
        ],
        "depth_threshold": "auto" if cfg.depth_threshold is None else cfg.depth_threshold,
        "knn_k": cfg.knn_k,
        "beta": cfg.beta,
        "truncation_radius": cfg.kernel_truncation_radius,
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def read_scene_config(path) -> SceneConfig:
    try:
        payload = json.loads(Path(path).read_text())
        poly_raw = payload.get("polyline")
        polyline = None
        if poly_raw is not None:
            polyline = Polyline(
                tuple(
                    PolySegment(
                        float(s["x_start"]), float(s["x_end"]), float(s["k"]), float(s["b"])
                    )
                    for s in poly_raw
                )
            )
        threshold = payload.get("depth_threshold", "auto")
        if threshold in (None, "auto"):
            threshold = None
        else:
            threshold = float(threshold)
        return SceneConfig(
            scene_id=str(payload["scene_id"]),
            polyline=polyline,
            depth_threshold=threshold,
            knn_k=int(payload.get("knn_k", 3)),
            beta=float(payload.get("beta", 0.3)),
            kernel_truncation_radius=float(payload.get("truncation_radius", 3.0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad scene config: {exc}") from exc


# -- debug rasters ----------------------------------------------------------

def write_pgm8(path, values: np.ndarray) -> None:
    """8-bit grayscale PGM from a (rows, cols) uint8 array."""
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim != 2:
        raise ConfigError("PGM rasters must be 2-D")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + arr.tobytes())


def heatmap_u8(values: np.ndarray) -> np.ndarray:
    """Linear scaling of a non-negative field to 0..255 (max maps to 255)."""
    arr = np.asarray(values, dtype=np.float64)
    peak = arr.max() if arr.size else 0.0
    if peak <= 0.0:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round(arr / peak * 255.0).astype(np.uint8)
