import math

import numpy as np
import pytest

from digcrowd import (
    ConfigError,
    DensityField,
    DigCrowdError,
    GridShape,
    HeadPoint,
    KernelParams,
    Polyline,
    Region,
    adaptive_sigma,
    far_count_from_external,
    integrate,
    knn_mean_distance,
    mask_from_polyline,
    rasterize_density,
)
from digcrowd.io import write_density_field


def _uniform_params(n, sigma=2.0, trunc=3.0):
    return [KernelParams(sigma=sigma, beta=0.3, truncation_radius=trunc)] * n


def _full_mask(shape, far=True):
    line = float(shape.height) if far else 0.0
    return mask_from_polyline(Polyline.constant(line, x_end=float(shape.width)), shape)


class TestKnnMeanDistance:
    def test_worked_triangle(self):
        heads = [HeadPoint(0, 0), HeadPoint(3, 0), HeadPoint(0, 4)]
        stats = knn_mean_distance(heads, k=2)
        assert stats[0].mean == pytest.approx(3.5, abs=1e-12)
        assert stats[0].k_used == 2
        assert stats[0].distances.tolist() == pytest.approx([3.0, 4.0])

    def test_k_clamped_to_available_neighbors(self):
        heads = [HeadPoint(0, 0), HeadPoint(10, 0)]
        stats = knn_mean_distance(heads, k=3)
        assert all(s.mean == pytest.approx(10.0) and s.k_used == 1 for s in stats)

    def test_single_head_undefined(self):
        stats = knn_mean_distance([HeadPoint(5, 5)], k=3)
        assert stats[0].k_used == 0
        assert math.isnan(stats[0].mean)
        assert not stats[0].is_defined

    def test_empty_errors(self):
        with pytest.raises(ConfigError):
            knn_mean_distance([], k=2)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            n = int(rng.integers(2, 120))
            k = int(rng.integers(1, 6))
            pts = rng.uniform(0, 300, (n, 2))
            stats = knn_mean_distance(pts, k)
            m = min(k, n - 1)
            # independent oracle: full pairwise distance matrix
            diff = pts[:, None, :] - pts[None, :, :]
            dmat = np.sqrt((diff**2).sum(axis=2))
            np.fill_diagonal(dmat, np.inf)
            dmat.sort(axis=1)
            want = dmat[:, :m].mean(axis=1)
            got = np.array([s.mean for s in stats])
            assert np.abs(got - want).max() < 1e-9


class TestAdaptiveSigma:
    def test_worked_value(self):
        stats = knn_mean_distance([HeadPoint(0, 0), HeadPoint(3, 0), HeadPoint(0, 4)], 2)
        assert adaptive_sigma(stats[0], 0.3).sigma == pytest.approx(1.05, abs=1e-12)

    def test_floor_for_lone_head(self):
        stats = knn_mean_distance([HeadPoint(1, 1)], 3)
        assert adaptive_sigma(stats[0], 0.3, sigma_floor=1.0).sigma == 1.0

    def test_large_spacing(self):
        stats = knn_mean_distance([HeadPoint(0, 0), HeadPoint(100, 0)], 1)
        assert adaptive_sigma(stats[0], 0.3).sigma == pytest.approx(30.0)

    def test_floor_clamps_small_products(self):
        stats = knn_mean_distance([HeadPoint(0, 0), HeadPoint(0.5, 0)], 1)
        assert adaptive_sigma(stats[0], 0.3, sigma_floor=1.0).sigma == 1.0


class TestRasterizeDensity:
    def test_mass_equals_head_count_exactly(self):
        rng = np.random.default_rng(41)
        shape = GridShape(200, 150)
        for n in (1, 7, 80):
            pts = np.column_stack(
                [rng.uniform(0, shape.width, n), rng.uniform(0, shape.height, n)]
            )
            field = rasterize_density(pts, _uniform_params(n), shape)
            assert field.total_mass == float(n)

    def test_corner_head_unit_mass(self):
        shape = GridShape(64, 64)
        field = rasterize_density([HeadPoint(0.0, 0.0)], _uniform_params(1, sigma=4.0), shape)
        assert field.total_mass == 1.0

    def test_rotational_symmetry_about_center_head(self):
        shape = GridShape(64, 64)
        field = rasterize_density([HeadPoint(32.0, 32.0)], _uniform_params(1, sigma=3.0), shape)
        vals = field.values
        for rotated in (np.rot90(vals), np.rot90(vals, 2), np.rot90(vals, 3)):
            assert np.abs(vals - rotated).max() < 1e-9

    def test_peak_strictly_decreases_with_sigma(self):
        shape = GridShape(96, 96)
        peaks = []
        for sigma in (1.0, 2.0, 4.0, 8.0):
            f = rasterize_density(
                [HeadPoint(48.0, 48.0)], _uniform_params(1, sigma=sigma), shape
            )
            peaks.append(f.values.max())
            assert f.total_mass == 1.0
        assert all(a > b for a, b in zip(peaks, peaks[1:]))

    def test_translation_invariance(self):
        shape = GridShape(120, 100)
        base = np.array([[30.25, 40.5], [35.75, 44.25], [33.5, 52.125]])
        params = _uniform_params(3, sigma=2.0)
        f0 = rasterize_density(base, params, shape)
        f1 = rasterize_density(base + np.array([17.0, 9.0]), params, shape)
        shifted = np.roll(np.roll(f0.values, 9, axis=0), 17, axis=1)
        assert np.abs(shifted - f1.values).max() < 1e-9

    def test_support_mask_confines_mass(self):
        shape = GridShape(60, 60)
        mask = _full_mask(shape, far=False)
        far_mask = mask_from_polyline(Polyline.constant(30.0, x_end=60.0), shape)
        # head 2 px above the line with a kernel that would spill across it
        field = rasterize_density(
            [HeadPoint(30.0, 28.0)],
            _uniform_params(1, sigma=4.0),
            shape,
            support_mask=far_mask.far,
        )
        assert field.total_mass == 1.0
        assert integrate(field, far_mask, Region.FAR) == 1.0
        assert integrate(field, far_mask, Region.NEAR) == 0.0

    def test_head_outside_grid_rejected(self):
        with pytest.raises(ConfigError):
            rasterize_density([HeadPoint(70.0, 5.0)], _uniform_params(1), GridShape(64, 64))

    def test_params_length_mismatch(self):
        with pytest.raises(ConfigError):
            rasterize_density([HeadPoint(1, 1)], _uniform_params(2), GridShape(8, 8))


class TestIntegrate:
    def test_all_is_total_mass(self):
        rng = np.random.default_rng(3)
        shape = GridShape(50, 40)
        pts = np.column_stack([rng.uniform(0, 50, 9), rng.uniform(0, 40, 9)])
        field = rasterize_density(pts, _uniform_params(9), shape)
        assert integrate(field, _full_mask(shape), Region.ALL) == field.total_mass

    def test_region_additivity_exact(self):
        rng = np.random.default_rng(13)
        shape = GridShape(80, 60)
        pts = np.column_stack([rng.uniform(0, 80, 25), rng.uniform(0, 60, 25)])
        field = rasterize_density(pts, _uniform_params(25), shape)
        mask = mask_from_polyline(Polyline.constant(25.0, x_end=80.0), shape)
        near = integrate(field, mask, Region.NEAR)
        far = integrate(field, mask, Region.FAR)
        assert near + far == integrate(field, mask, Region.ALL)

    def test_unit_kernel_inside_far_region(self):
        shape = GridShape(60, 60)
        mask = mask_from_polyline(Polyline.constant(40.0, x_end=60.0), shape)
        field = rasterize_density(
            [HeadPoint(30.0, 15.0)], _uniform_params(1, sigma=2.0), shape
        )
        assert integrate(field, mask, Region.FAR) == pytest.approx(1.0, abs=1e-6)

    def test_empty_far_region_zero(self):
        shape = GridShape(20, 20)
        field = rasterize_density([HeadPoint(10, 10)], _uniform_params(1), shape)
        assert integrate(field, _full_mask(shape, far=False), Region.FAR) == 0.0

    def test_shape_mismatch_errors(self):
        field = DensityField.zeros(GridShape(10, 10))
        with pytest.raises(DigCrowdError):
            integrate(field, _full_mask(GridShape(12, 10)), Region.ALL)

    def test_region_accepts_strings(self):
        field = DensityField.zeros(GridShape(4, 4))
        assert integrate(field, _full_mask(GridShape(4, 4)), "all") == 0.0


class TestFarCountFromExternal:
    def test_oracle_field_roundtrip(self, tmp_path):
        rng = np.random.default_rng(71)
        shape = GridShape(120, 90)
        mask = mask_from_polyline(Polyline.constant(45.0, x_end=120.0), shape)
        far_pts = np.column_stack([rng.uniform(0, 120, 30), rng.uniform(0, 43, 30)])
        field = rasterize_density(
            far_pts, _uniform_params(30, sigma=1.5), shape, support_mask=mask.far
        )
        path = tmp_path / "far.digf"
        write_density_field(path, field)
        assert far_count_from_external(path, mask) == pytest.approx(30.0, abs=1e-3)

    def test_zero_field(self, tmp_path):
        shape = GridShape(16, 16)
        path = tmp_path / "zero.digf"
        write_density_field(path, DensityField.zeros(shape))
        assert far_count_from_external(path, _full_mask(shape)) == 0.0

    def test_near_only_mass_excluded(self, tmp_path):
        shape = GridShape(40, 40)
        mask = mask_from_polyline(Polyline.constant(20.0, x_end=40.0), shape)
        field = rasterize_density(
            [HeadPoint(20.0, 35.0)], _uniform_params(1, sigma=1.0), shape
        )
        path = tmp_path / "near.digf"
        write_density_field(path, field)
        assert far_count_from_external(path, mask) == 0.0

    def test_shape_mismatch(self, tmp_path):
        path = tmp_path / "bad.digf"
        write_density_field(path, DensityField.zeros(GridShape(8, 8)))
        with pytest.raises(DigCrowdError):
            far_count_from_external(path, _full_mask(GridShape(9, 8)))
