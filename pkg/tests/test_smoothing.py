"""
Tests de SmoothingService (suavizadores del lag 0 y σ²)
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigException, InsufficientDataException
from app.core.kernels import epanechnikov
from app.schemas.data import SparseFTS
from app.schemas.grids import SpatialGrid
from app.services.smoothing_service import SmoothingService
from tests.conftest import random_sparse


def constant(value):
    return lambda x: np.full(x.size, value)


class TestLag0Surface:

    def test_constant_products_reproduced(self, rng, grid):
        data = random_sparse(rng, T=40, per_time=6, values=constant(np.sqrt(2.0)))
        raw = SmoothingService.raw_covariances(data, L=1)
        surface = SmoothingService.smooth_lag0_surface(raw, grid, 0.3)
        np.testing.assert_allclose(surface.values, 2.0, rtol=1e-9)

    def test_matches_weighted_least_squares_oracle(self, rng, grid):
        data = random_sparse(rng, T=30, per_time=5)
        raw = SmoothingService.raw_covariances(data, L=1)
        B = 0.25
        surface = SmoothingService.smooth_lag0_surface(raw, grid, B)

        u, v, g, _ = raw.pairs(0)
        for i, j in [(5, 12), (0, 0), (20, 3)]:
            x, y = grid.points[i], grid.points[j]
            du, dv = (u - x) / B, (v - y) / B
            weights = epanechnikov(du) * epanechnikov(dv)
            design = np.column_stack([np.ones_like(du), du, dv])
            normal = design.T @ (weights[:, None] * design)
            rhs = design.T @ (weights * g)
            expected = np.linalg.solve(normal, rhs)[0]
            assert surface.values[i, j] == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_symmetric(self, rng, grid):
        data = random_sparse(rng, T=30, per_time=5)
        surface = SmoothingService.smooth_lag0_surface(SmoothingService.raw_covariances(data, L=1), grid, 0.3)
        np.testing.assert_array_equal(surface.values, surface.values.T)

    def test_needs_lag0_pairs(self, grid):
        data = SparseFTS.from_lists([[(0.1 * t, 1.0)] for t in range(1, 6)])
        raw = SmoothingService.raw_covariances(data, L=1)
        with pytest.raises(InsufficientDataException):
            SmoothingService.smooth_lag0_surface(raw, grid, 0.3)

    def test_rejects_non_positive_bandwidth(self, rng, grid):
        data = random_sparse(rng, T=10, per_time=3)
        with pytest.raises(ConfigException):
            SmoothingService.smooth_lag0_surface(SmoothingService.raw_covariances(data, L=1), grid, 0.0)


class TestDiagonals:

    def test_perpendicular_distance_sign(self):
        assert SmoothingService.perpendicular_distance(0.2, 0.4) == pytest.approx(np.sqrt(0.02))
        assert SmoothingService.perpendicular_distance(0.4, 0.2) == pytest.approx(-np.sqrt(0.02))
        assert SmoothingService.perpendicular_distance(0.3, 0.3) == 0.0

    def test_perpendicular_diagonal_constant(self, rng, grid):
        data = random_sparse(rng, T=60, per_time=8, values=constant(np.sqrt(3.0)))
        raw = SmoothingService.raw_covariances(data, L=1)
        Rbar = SmoothingService.smooth_diagonal_perpendicular(raw, grid, 0.3)
        np.testing.assert_allclose(Rbar, 3.0, rtol=1e-8)

    def test_perpendicular_diagonal_matches_oracle(self, rng, grid):
        data = random_sparse(rng, T=40, per_time=5)
        B = 0.3
        Rbar = SmoothingService.smooth_diagonal_perpendicular(SmoothingService.raw_covariances(data, L=1), grid, B)

        for i in (2, 10, 18):
            x0 = grid.points[i]
            normal = np.zeros((3, 3))
            rhs = np.zeros(3)
            for t in range(1, data.T + 1):
                idx = np.flatnonzero(data.t == t)
                for j in idx:
                    for k in idx:
                        if j == k:
                            continue
                        weight = epanechnikov((data.x[j] - x0) / B) * epanechnikov((data.x[k] - x0) / B)
                        delta = SmoothingService.perpendicular_distance(data.x[j], data.x[k])
                        design = np.array([1.0, delta, delta ** 2])
                        normal += weight * np.outer(design, design)
                        rhs += weight * design * data.y[j] * data.y[k]
            expected = np.linalg.solve(normal, rhs)[0]
            assert Rbar[i] == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_noisy_diagonal_constant(self, rng, grid):
        data = random_sparse(rng, T=20, per_time=4, values=constant(-1.5))
        V = SmoothingService.smooth_noisy_diagonal(data, grid, 0.2)
        np.testing.assert_allclose(V, 2.25, rtol=1e-10)

    def test_noisy_diagonal_affine(self, rng, grid):
        data = random_sparse(rng, T=20, per_time=4, values=lambda x: np.sqrt(1.0 + x))
        V = SmoothingService.smooth_noisy_diagonal(data, grid, 0.2)
        np.testing.assert_allclose(V, 1.0 + grid.points, rtol=1e-8)

    def test_noisy_diagonal_matches_oracle(self, rng, grid):
        data = random_sparse(rng, T=25, per_time=4)
        B = 0.15
        V = SmoothingService.smooth_noisy_diagonal(data, grid, B)
        for i in (0, 7, 20):
            d = (data.x - grid.points[i]) / B
            weights = epanechnikov(d)
            design = np.column_stack([np.ones_like(d), d])
            normal = design.T @ (weights[:, None] * design)
            expected = np.linalg.solve(normal, design.T @ (weights * data.y ** 2))[0]
            assert V[i] == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_mean_affine(self, rng, grid):
        data = random_sparse(rng, T=20, per_time=4, values=lambda x: 0.5 - x)
        mu = SmoothingService.smooth_mean(data, grid, 0.2)
        np.testing.assert_allclose(mu, 0.5 - grid.points, atol=1e-10)


class TestNoise:

    def test_constant_offset(self, grid):
        Rbar = np.linspace(0.5, 1.5, grid.p)
        assert SmoothingService.estimate_sigma2(Rbar + 0.5, Rbar, grid).sigma2 == pytest.approx(0.5)

    def test_degenerate_clipped_to_floor(self):
        grid = SpatialGrid(p=11)
        V = np.ones(grid.p)
        assert SmoothingService.estimate_sigma2(V, V, grid).sigma2 == pytest.approx(1e-6)
        V = 4.0 * np.ones(grid.p)
        assert SmoothingService.estimate_sigma2(V, V + 1.0, grid).sigma2 == pytest.approx(4e-6)
