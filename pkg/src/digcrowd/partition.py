"""Depth-driven scene split.

The depth map is clustered by a windowed local k-means over the joint
[depth, x, y] space (superpixel style: regularly seeded centers, each
searching a 2S x 2S window, distances mixing feature similarity with
spatial proximity scaled by a compactness weight). Clusters are then
classified near/far by mean depth, and the far band's lower boundary is
simplified into the split polyline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import ConfigError, DigCrowdError, PartitionError
from .scene import DepthMap, GridShape, Polyline, RegionMask, SceneConfig, mask_from_polyline

__all__ = [
    "ClusterFeature",
    "ClusterState",
    "ClusterLabels",
    "PartitionResult",
    "cluster_depth",
    "classify_clusters",
    "extract_polyline",
    "partition",
]

CENTER_RESIDUAL_TOL = 1e-4


@dataclass(frozen=True)
class ClusterFeature:
    """Cluster center: depth value plus spatial position in pixels."""

    feature: float
    px: float
    py: float


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Result of clustering: dense per-pixel ids plus center coordinates."""

    assignments: np.ndarray
    feature: np.ndarray
    px: np.ndarray
    py: np.ndarray
    grid_step: float
    compactness: float
    energy_history: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("assignments", "feature", "px", "py"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.cluster_count < 1:
            raise ConfigError("cluster state needs at least one center")

    @property
    def cluster_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def centers(self) -> tuple[ClusterFeature, ...]:
        return tuple(
            ClusterFeature(float(f), float(x), float(y))
            for f, x, y in zip(self.feature, self.px, self.py)
        )


class ClusterLabels(NamedTuple):
    far: np.ndarray  # bool per cluster
    threshold: float
    mean_depths: np.ndarray


@dataclass(frozen=True, eq=False)
class PartitionResult:
    """Near/far mask plus the split polyline and partition diagnostics."""

    mask: RegionMask
    polyline: Polyline
    cluster_mean_depths: tuple[float, ...] = ()
    threshold_used: float | None = None
    warnings: tuple[str, ...] = ()
    cluster_assignments: np.ndarray | None = None
    energy_history: tuple[float, ...] = ()


def _seed_grid(depth: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Regular-grid centers, each nudged to the flattest pixel of its 3x3 patch."""
    height, width = depth.shape
    nx = int(np.clip(round(np.sqrt(target * width / height)), 1, width))
    ny = int(np.clip(round(target / nx), 1, height))
    if nx * ny < 2:
        if height >= 2:
            ny = 2
        else:
            nx = 2
    gy, gx = np.gradient(depth)
    grad = np.sqrt(gx * gx + gy * gy)
    feat, cpx, cpy = [], [], []
    for j in range(ny):
        for i in range(nx):
            cx = int(round((i + 0.5) * width / nx - 0.5))
            cy = int(round((j + 0.5) * height / ny - 0.5))
            c_lo, c_hi = max(0, cx - 1), min(width - 1, cx + 1)
            r_lo, r_hi = max(0, cy - 1), min(height - 1, cy + 1)
            patch = grad[r_lo : r_hi + 1, c_lo : c_hi + 1]
            flat = int(np.argmin(patch))
            py = r_lo + flat // patch.shape[1]
            px = c_lo + flat % patch.shape[1]
            feat.append(depth[py, px])
            cpx.append(float(px))
            cpy.append(float(py))
    return (
        np.asarray(feat, dtype=np.float64),
        np.asarray(cpx, dtype=np.float64),
        np.asarray(cpy, dtype=np.float64),
    )


def _current_distance(depth, assign, feat, cpx, cpy, ratio2, cols, rows):
    df = depth - feat[assign]
    dx = cols - cpx[assign]
    dy = rows - cpy[assign]
    return df * df + ratio2 * (dx * dx + dy * dy)


def _attach_orphans(depth, feat, cpx, cpy, ratio2, cols, rows, best_d2, best_id):
    orphan = best_id < 0
    if not orphan.any():
        return
    oc = cols[orphan]
    orr = rows[orphan]
    od = depth[orphan]
    o_best = np.full(od.shape, np.inf)
    o_id = np.full(od.shape, -1, dtype=np.int32)
    for k in range(feat.shape[0]):
        df = od - feat[k]
        dx = oc - cpx[k]
        dy = orr - cpy[k]
        d2 = df * df + ratio2 * (dx * dx + dy * dy)
        better = d2 < o_best
        o_best[better] = d2[better]
        o_id[better] = k
    best_d2[orphan] = o_best
    best_id[orphan] = o_id


def cluster_depth(
    depth: DepthMap,
    target_cluster_count: int = 256,
    compactness: float = 0.1,
    max_iters: int = 10,
) -> ClusterState:
    """Windowed local k-means over [depth, x, y].

    The iteration alternates center updates (means of assigned pixels)
    with reassignment; a pixel's candidate set is every center whose
    window covers it plus its current center, which keeps the summed
    squared distance non-increasing every iteration. Pixels outside all
    windows are attached to the globally nearest center. Fully
    deterministic: grid seeding, smallest-id tie-breaking.
    """
    grid = np.asarray(depth.values, dtype=np.float64)
    height, width = grid.shape
    n = height * width
    if n < 2:
        raise ConfigError("cannot cluster a single-pixel grid")
    if not (2 <= target_cluster_count <= n):
        raise ConfigError(
            f"target cluster count {target_cluster_count} outside [2, {n}]"
        )
    if not (compactness > 0.0):
        raise ConfigError("compactness must be positive")
    if max_iters < 0:
        raise ConfigError("max_iters must be >= 0")

    step = float(np.sqrt(n / target_cluster_count))
    ratio2 = (compactness / step) ** 2
    feat, cpx, cpy = _seed_grid(grid, target_cluster_count)
    k_count = feat.shape[0]

    cols2d, rows2d = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    cols = cols2d.ravel()
    rows = rows2d.ravel()
    flat_depth = grid.ravel()

    best_d2 = np.full((height, width), np.inf)
    best_id = np.full((height, width), -1, dtype=np.int32)
    _kernels.assign_windows(grid, feat, cpx, cpy, ratio2, step, best_d2, best_id)
    bd = best_d2.ravel()
    bi = best_id.ravel()
    _attach_orphans(flat_depth, feat, cpx, cpy, ratio2, cols, rows, bd, bi)
    assign = bi.copy()
    energies = [float(bd.sum())]

    for _ in range(max_iters):
        counts = np.bincount(assign, minlength=k_count).astype(np.float64)
        sum_f = np.bincount(assign, weights=flat_depth, minlength=k_count)
        sum_x = np.bincount(assign, weights=cols, minlength=k_count)
        sum_y = np.bincount(assign, weights=rows, minlength=k_count)
        nz = counts > 0
        new_feat = np.where(nz, sum_f / np.maximum(counts, 1.0), feat)
        new_px = np.where(nz, sum_x / np.maximum(counts, 1.0), cpx)
        new_py = np.where(nz, sum_y / np.maximum(counts, 1.0), cpy)
        residual = float(
            np.sqrt(
                (new_feat - feat) ** 2 + (new_px - cpx) ** 2 + (new_py - cpy) ** 2
            ).max()
        )
        feat, cpx, cpy = new_feat, new_px, new_py

        best_d2 = _current_distance(
            flat_depth, assign, feat, cpx, cpy, ratio2, cols, rows
        ).reshape(height, width)
        best_id = assign.reshape(height, width).astype(np.int32).copy()
        _kernels.assign_windows(grid, feat, cpx, cpy, ratio2, step, best_d2, best_id)
        assign = best_id.ravel().copy()
        energies.append(float(best_d2.sum()))
        if residual < CENTER_RESIDUAL_TOL:
            break

    # Drop empty clusters so ids stay dense.
    counts = np.bincount(assign, minlength=k_count)
    keep = counts > 0
    if not keep.all():
        remap = np.full(k_count, -1, dtype=np.int32)
        remap[keep] = np.arange(int(keep.sum()), dtype=np.int32)
        assign = remap[assign]
        feat, cpx, cpy = feat[keep], cpx[keep], cpy[keep]

    return ClusterState(
        assignments=assign.reshape(height, width).astype(np.int32),
        feature=feat,
        px=cpx,
        py=cpy,
        grid_step=step,
        compactness=compactness,
        energy_history=tuple(energies),
    )


def classify_clusters(
    state: ClusterState, depth: DepthMap, threshold: float | None = None
) -> ClusterLabels:
    """Label clusters far/near by mean depth.

    With ``threshold=None`` the split maximizes the between-class variance
    of the cluster mean depths, scanning the midpoints between consecutive
    sorted means. A cluster is far iff its mean depth >= threshold.
    """
    if state.assignments.shape != depth.shape.array_shape:
        raise ConfigError("cluster state does not match depth grid")
    flat = state.assignments.ravel()
    k_count = state.cluster_count
    counts = np.bincount(flat, minlength=k_count).astype(np.float64)
    sums = np.bincount(flat, weights=depth.values.ravel(), minlength=k_count)
    means = sums / np.maximum(counts, 1.0)

    if threshold is None:
        uniq = np.unique(means)
        if uniq.size < 2:
            raise PartitionError(
                "cluster mean depths show no contrast; supply a manual polyline"
            )
        candidates = (uniq[:-1] + uniq[1:]) / 2.0
        best_var = -1.0
        threshold = float(candidates[0])
        total = means.size
        for t in candidates:
            lo = means < t
            n_lo = int(lo.sum())
            if n_lo == 0 or n_lo == total:
                continue  # midpoint of adjacent floats can round onto a mean
            w0 = n_lo / total
            w1 = 1.0 - w0
            var = w0 * w1 * (means[lo].mean() - means[~lo].mean()) ** 2
            if var > best_var:
                best_var = var
                threshold = float(t)
    elif not (0.0 <= threshold <= 1.0):
        raise ConfigError(f"depth threshold {threshold} outside [0, 1]")

    return ClusterLabels(far=means >= threshold, threshold=float(threshold), mean_depths=means)


def _douglas_peucker(xs: np.ndarray, ys: np.ndarray, tol: float) -> np.ndarray:
    """Vertex indices whose chords stay within tol vertical deviation."""
    keep = np.zeros(xs.size, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, xs.size - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        k = (ys[j] - ys[i]) / (xs[j] - xs[i])
        dev = np.abs(ys[i + 1 : j] - (ys[i] + k * (xs[i + 1 : j] - xs[i])))
        worst = int(np.argmax(dev))
        if dev[worst] > tol:
            mid = i + 1 + worst
            keep[mid] = True
            stack.append((i, mid))
            stack.append((mid, j))
    return np.flatnonzero(keep)


def extract_polyline(
    far_labels: np.ndarray,
    state: ClusterState,
    shape: GridShape,
    simplify_tol: float = 2.0,
) -> tuple[Polyline, tuple[str, ...]]:
    """Trace the far band's lower boundary and simplify it to a polyline.

    Cleanup keeps the largest 4-connected far component and fills holes;
    per column the boundary is the count of leading far rows. Columns where
    far pixels survive below near ones fall back to that upper envelope and
    raise a segmentation-quality warning.
    """
    far_labels = np.asarray(far_labels, dtype=bool)
    if not far_labels.any() or far_labels.all():
        raise PartitionError("polyline extraction needs both near and far clusters")
    warnings: list[str] = []
    far_px = far_labels[state.assignments]

    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    labeled, n_comp = ndimage.label(far_px, structure=structure)
    if n_comp == 0:
        raise PartitionError("far region empty after cluster labeling")
    sizes = np.bincount(labeled.ravel())
    sizes[0] = 0
    far_clean = ndimage.binary_fill_holes(labeled == int(np.argmax(sizes)))

    height, width = shape.array_shape
    all_far = far_clean.all(axis=0)
    boundary = np.where(all_far, height, (~far_clean).argmax(axis=0)).astype(np.float64)
    below = np.zeros(width, dtype=bool)
    for x in range(width):
        b = int(boundary[x])
        if b < height and far_clean[b:, x].any():
            below[x] = True
    if below.any():
        warnings.append(
            f"far region is not a clean upper band in {int(below.sum())} columns; "
            "using the column-wise upper envelope"
        )

    xs = np.arange(width, dtype=np.float64) + 0.5
    if width == 1:
        poly = Polyline.constant(float(boundary[0]), x_end=float(width))
    else:
        idx = _douglas_peucker(xs, boundary, simplify_tol)
        vx = xs[idx].copy()
        vy = boundary[idx]
        vx[0] = 0.0
        vx[-1] = float(width)
        # Endpoints keep their fitted slope; only the domain is extended.
        if idx.size == 2:
            k = (vy[1] - vy[0]) / (xs[idx[1]] - xs[idx[0]])
            b0 = vy[0] - k * xs[idx[0]]
            vy = np.array([k * 0.0 + b0, k * width + b0])
        else:
            k_first = (vy[1] - vy[0]) / (xs[idx[1]] - xs[idx[0]])
            vy[0] = vy[1] - k_first * (xs[idx[1]] - 0.0)
            k_last = (vy[-1] - vy[-2]) / (xs[idx[-1]] - xs[idx[-2]])
            vy[-1] = vy[-2] + k_last * (width - xs[idx[-2]])
        poly = Polyline.from_points(vx, vy)
    return poly, tuple(warnings)


def partition(
    depth: DepthMap,
    cfg: SceneConfig,
    *,
    target_cluster_count: int = 256,
    compactness: float = 0.1,
    max_iters: int = 10,
    simplify_tol: float = 2.0,
) -> PartitionResult:
    """Produce the scene's near/far split.

    A manual polyline in the config wins outright; otherwise the depth map
    is clustered, clusters are thresholded into near/far, and the boundary
    polyline is extracted. The returned mask is always the rasterization of
    the returned polyline, so detector filtering and density integration
    see complementary regions.
    """
    if cfg.polyline is not None:
        mask = mask_from_polyline(cfg.polyline, depth.shape)
        return PartitionResult(mask=mask, polyline=cfg.polyline)
    try:
        state = cluster_depth(
            depth,
            target_cluster_count=target_cluster_count,
            compactness=compactness,
            max_iters=max_iters,
        )
        labels = classify_clusters(state, depth, cfg.depth_threshold)
        poly, warnings = extract_polyline(labels.far, state, depth.shape, simplify_tol)
    except DigCrowdError as exc:
        raise PartitionError(f"scene {cfg.scene_id!r}: {exc}") from exc
    mask = mask_from_polyline(poly, depth.shape)
    return PartitionResult(
        mask=mask,
        polyline=poly,
        cluster_mean_depths=tuple(float(m) for m in labels.mean_depths),
        threshold_used=labels.threshold,
        warnings=warnings,
        cluster_assignments=state.assignments,
        energy_history=state.energy_history,
    )
