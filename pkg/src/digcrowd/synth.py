"""Synthetic scenes: perspective-distributed heads over consistent depth maps.

People far from the camera sit high in the frame, look small, and bunch
together; near people sit low and spread out. The generator realizes that
regime without rendering pixels: a vertical depth gradient, head points
with depth-scaled sizes and spacing, and oracle prediction data (detections
plus a density field) that can be corrupted with controlled noise. With all
noise at zero the oracle predictions reproduce the ground truth exactly.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .density import (
    DensityField,
    adaptive_sigma,
    knn_mean_distance,
    rasterize_density,
)
from .detect import DetectionSet
from .errors import ConfigError, SynthError
from .partition import PartitionResult
from .scene import (
    BoundingBox,
    DepthMap,
    GridShape,
    HeadPoint,
    Polyline,
    SceneConfig,
    SceneRecord,
)

__all__ = [
    "SynthSpec",
    "NoiseSpec",
    "OraclePredictions",
    "generate_scene",
    "generate_step_depth",
    "oracle_predictions",
]

SPACING_FACTOR = 0.45  # fraction of the local head size kept clear around a head


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one synthetic scene."""

    shape: GridShape = GridShape(1080, 720)
    n_people: int = 117
    horizon_y: float = 600.0
    near_head_size: float = 36.0
    far_head_size: float = 10.0
    clustering_intensity: float = 0.0
    seed: int = 0
    exclusion_margin: float = 2.0

    def __post_init__(self):
        if self.n_people < 1:
            raise ConfigError(f"n_people must be >= 1, got {self.n_people}")
        if not (0.0 < self.horizon_y <= self.shape.height):
            raise ConfigError(
                f"horizon_y {self.horizon_y} outside (0, {self.shape.height}]"
            )
        if not (0.0 < self.far_head_size < self.near_head_size):
            raise ConfigError(
                "head sizes must satisfy 0 < far_head_size < near_head_size"
            )
        if self.clustering_intensity < 0.0:
            raise ConfigError("clustering_intensity must be >= 0")
        if self.exclusion_margin < 0.0:
            raise ConfigError("exclusion_margin must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Prediction corruption levels; all zero means exact oracle output."""

    p_miss: float = 0.0
    fp_rate: float = 0.0
    box_jitter: float = 0.0
    density_noise_sigma: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p_miss <= 1.0):
            raise ConfigError(f"p_miss {self.p_miss} outside [0, 1]")
        if self.fp_rate < 0.0 or self.box_jitter < 0.0 or self.density_noise_sigma < 0.0:
            raise ConfigError("noise magnitudes must be >= 0")

    @property
    def is_zero(self) -> bool:
        return (
            self.p_miss == 0.0
            and self.fp_rate == 0.0
            and self.box_jitter == 0.0
            and self.density_noise_sigma == 0.0
        )


@dataclass(frozen=True, eq=False)
class OraclePredictions:
    """Prediction data for one scene, ready for serialization or direct use."""

    detections: DetectionSet
    density: DensityField
    near_head_count: int
    far_head_count: int


def _build_depth(spec: SynthSpec, rng: np.random.Generator) -> DepthMap:
    """Vertical gradient toward the top plus smooth column-wise structure.

    The perturbation varies only along x so depth stays non-increasing in y
    above the horizon row.
    """
    width, height = spec.shape.width, spec.shape.height
    ys = np.arange(height, dtype=np.float64)[:, None]
    base = np.clip((spec.horizon_y - ys) / spec.horizon_y, 0.0, 1.0)
    xs = np.arange(width, dtype=np.float64) / max(width, 1)
    ripple = np.zeros(width)
    for _ in range(2):
        freq = rng.uniform(1.0, 3.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        ripple += rng.uniform(0.005, 0.02) * np.sin(2.0 * math.pi * freq * xs + phase)
    values = np.clip(base + ripple[None, :], 0.0, 1.0)
    return DepthMap(spec.shape, values)


def generate_step_depth(
    shape: GridShape,
    boundary_row: int,
    far_depth: float = 0.85,
    near_depth: float = 0.15,
    ripple: float = 0.02,
    seed: int = 0,
) -> DepthMap:
    """Two-level depth with a known horizontal boundary, for partition checks."""
    if not (0 < boundary_row < shape.height):
        raise ConfigError(f"boundary row {boundary_row} outside (0, {shape.height})")
    rng = np.random.default_rng(seed)
    values = np.full(shape.array_shape, near_depth, dtype=np.float64)
    values[:boundary_row, :] = far_depth
    if ripple > 0.0:
        xs = np.arange(shape.width, dtype=np.float64) / max(shape.width, 1)
        wobble = ripple * np.sin(2.0 * math.pi * rng.uniform(1.0, 2.0) * xs + rng.uniform(0, 6.28))
        values = np.clip(values + wobble[None, :], 0.0, 1.0)
    return DepthMap(shape, values)


def head_size_at(spec: SynthSpec, depth_value: float) -> float:
    """Apparent head size: near size at depth 0 shrinking to far size at 1."""
    return spec.far_head_size + (spec.near_head_size - spec.far_head_size) * (
        1.0 - depth_value
    )


def _split_row(spec: SynthSpec) -> float:
    return spec.horizon_y / 2.0


def generate_scene(spec: SynthSpec, scene_id: str | None = None) -> SceneRecord:
    """Deterministic scene from a seed: depth, heads, and a manual split line.

    Heads are rejected within ``exclusion_margin`` of the split line and at
    less than a size-scaled minimum spacing from accepted heads, which makes
    far-band heads pack tighter than near ones. With positive
    ``clustering_intensity`` part of the crowd is drawn around far-band
    cluster centers instead of uniformly.
    """
    rng = np.random.default_rng(spec.seed)
    depth = _build_depth(spec, rng)
    width, height = spec.shape.width, spec.shape.height
    split_y = _split_row(spec)
    polyline = Polyline.constant(split_y, x_end=float(width))
    config = SceneConfig(
        scene_id=scene_id or f"synth-{spec.seed}",
        polyline=polyline,
    )

    p_cluster = spec.clustering_intensity / (1.0 + spec.clustering_intensity)
    far_top = min(2.0 * spec.far_head_size, split_y / 4.0)
    far_bottom = split_y - spec.exclusion_margin - 1.0
    centers = None
    if p_cluster > 0.0 and far_bottom > far_top:
        n_centers = max(1, int(round(math.sqrt(spec.n_people) / 2.0)))
        centers = np.column_stack(
            [
                rng.uniform(0.0, width, n_centers),
                rng.uniform(far_top, far_bottom, n_centers),
            ]
        )

    placed = np.empty((spec.n_people, 2), dtype=np.float64)
    sizes = np.empty(spec.n_people, dtype=np.float64)
    count = 0
    attempts = 0
    max_attempts = max(2000, 600 * spec.n_people)
    spread = 2.5 * spec.far_head_size
    while count < spec.n_people and attempts < max_attempts:
        attempts += 1
        if centers is not None and rng.random() < p_cluster:
            cx, cy = centers[int(rng.integers(len(centers)))]
            x = cx + rng.normal(0.0, spread)
            y = cy + rng.normal(0.0, spread)
            if not (0.0 <= x < width and far_top <= y <= far_bottom):
                continue
        else:
            x = rng.uniform(0.0, width)
            y = rng.uniform(0.0, height)
        if abs(y - split_y) < spec.exclusion_margin:
            continue
        size = head_size_at(spec, float(depth.values[int(y), int(x)]))
        if count:
            d = np.hypot(placed[:count, 0] - x, placed[:count, 1] - y)
            min_sep = SPACING_FACTOR * np.minimum(sizes[:count], size)
            if (d < min_sep).any():
                continue
        placed[count] = (x, y)
        sizes[count] = size
        count += 1
    if count < spec.n_people:
        raise SynthError(
            f"could only place {count}/{spec.n_people} heads at the minimum "
            f"spacing; reduce n_people or head sizes"
        )
    heads = tuple(HeadPoint(float(x), float(y)) for x, y in placed)
    return SceneRecord(
        config=config,
        depth=depth,
        heads=heads,
        ground_truth_count=float(spec.n_people),
    )


def _oracle_box(
    x: float, y: float, size: float, width: int, height: int, score: float
) -> BoundingBox | None:
    half = size / 2.0
    x_min = max(0.0, x - half)
    y_min = max(0.0, y - half)
    x_max = min(float(width), x + half)
    y_max = min(float(height), y + half)
    if x_max <= x_min or y_max <= y_min:
        return None
    return BoundingBox(x_min, y_min, x_max, y_max, score)


def oracle_predictions(
    rec: SceneRecord,
    part: PartitionResult,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    spec: SynthSpec | None = None,
) -> OraclePredictions:
    """Predictions a perfect (or controllably degraded) model would emit.

    Heads on the near side of the split line (center not strictly above it)
    become detections sized by local depth; heads strictly above it are
    rasterized into a density field confined to the far mask, so the far
    integral equals the far head count. Misses, false positives, box jitter,
    and pixel noise are applied from a seeded stream.
    """
    # crc32 keeps the stream stable across processes (str hash is randomized)
    rng = np.random.default_rng([seed, zlib.crc32(rec.config.scene_id.encode())])
    width, height = rec.depth.shape.width, rec.depth.shape.height
    sizing = spec or SynthSpec(shape=rec.depth.shape)
    poly = part.polyline

    near_heads: list[HeadPoint] = []
    far_heads: list[HeadPoint] = []
    for h in rec.heads:
        if h.y < poly.eval(h.x):
            far_heads.append(h)
        else:
            near_heads.append(h)

    boxes: list[BoundingBox] = []
    for h in near_heads:
        if noise.p_miss > 0.0 and rng.random() < noise.p_miss:
            continue
        x, y = h.x, h.y
        if noise.box_jitter > 0.0:
            x += rng.normal(0.0, noise.box_jitter)
            y += rng.normal(0.0, noise.box_jitter)
        d = float(rec.depth.values[min(int(h.y), height - 1), min(int(h.x), width - 1)])
        box = _oracle_box(x, y, head_size_at(sizing, d), width, height, 1.0)
        if box is not None:
            boxes.append(box)
    if noise.fp_rate > 0.0:
        for _ in range(int(rng.poisson(noise.fp_rate))):
            x = rng.uniform(0.0, width)
            d = float(rec.depth.values[height - 1, min(int(x), width - 1)])
            size = head_size_at(sizing, d)
            y_lo = poly.eval(x) + size / 2.0 + 1.0
            if y_lo >= height - 1:
                continue
            y = rng.uniform(y_lo, height - 1)
            box = _oracle_box(x, y, size, width, height, float(rng.uniform(0.25, 1.0)))
            if box is not None:
                boxes.append(box)
    detections = DetectionSet(tuple(boxes), source="oracle")

    if far_heads:
        stats = knn_mean_distance(far_heads, rec.config.knn_k)
        params = [
            adaptive_sigma(
                s,
                rec.config.beta,
                truncation_radius=rec.config.kernel_truncation_radius,
            )
            for s in stats
        ]
        density = rasterize_density(
            far_heads, params, rec.depth.shape, support_mask=part.mask.far
        )
    else:
        density = DensityField.zeros(rec.depth.shape)
    if noise.density_noise_sigma > 0.0:
        noisy = density.values + rng.normal(
            0.0, noise.density_noise_sigma, rec.depth.shape.array_shape
        )
        density = DensityField(rec.depth.shape, np.clip(noisy, 0.0, None))

    return OraclePredictions(
        detections=detections,
        density=density,
        near_head_count=len(near_heads),
        far_head_count=len(far_heads),
    )
