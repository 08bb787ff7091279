"""
Tests de SpectralService (densidades, inversión, autodescomposición)
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigException, DataException, InsufficientDataException
from app.core.kernels import epanechnikov
from app.schemas.data import ScalarTS
from app.schemas.grids import BartlettWeights, FrequencyGrid, SpatialGrid
from app.schemas.spectral import SpectralDensityEstimate
from app.services.smoothing_service import SmoothingService
from app.services.spectral_service import SpectralService
from tests.conftest import random_sparse


def pooled_system(data, L: int, B: float, x: float, y: float):
    """
    Ecuaciones normales agrupadas en (x, y) armadas par por par

    Returns:
        (normal 3x3 con pesos W_h/𝒩_h, {h: lado derecho del lag h})
    """
    normalizers = SpectralService.lag_normalizers(data.counts, L)
    bartlett = BartlettWeights(L=L)
    by_time = [np.flatnonzero(data.t == t) for t in range(1, data.T + 1)]
    normal = np.zeros((3, 3))
    rhs = {}
    for h in range(-(L - 1), L):
        weight = bartlett.weight(h) / normalizers[h]
        total = np.zeros(3)
        for t in range(1, data.T + 1):
            s = t + h
            if s < 1 or s > data.T:
                continue
            for a in by_time[s - 1]:
                for b in by_time[t - 1]:
                    if a == b:
                        continue
                    du, dv = (data.x[a] - x) / B, (data.x[b] - y) / B
                    k = epanechnikov(du) * epanechnikov(dv)
                    design = np.array([1.0, du, dv])
                    normal += weight * k * np.outer(design, design)
                    total += weight * k * design * data.y[a] * data.y[b]
        rhs[h] = total
    return normal, rhs


@pytest.fixture(scope="module")
def estimated(sparse_scenario):
    _, data, Z, _ = sparse_scenario
    grid, fgrid = SpatialGrid(p=21), FrequencyGrid(n_freq=64)
    raw = SmoothingService.raw_covariances(data, L=5)
    F = SpectralService.estimate_spectral_density(raw, grid, fgrid, L=5, B_R=0.2)
    return F, grid, fgrid


class TestSpectralDensity:

    def test_zero_data_gives_zero_density(self, rng, grid, fgrid):
        data = random_sparse(rng, T=20, per_time=4, values=lambda x: np.zeros(x.size))
        raw = SmoothingService.raw_covariances(data, L=3)
        F = SpectralService.estimate_spectral_density(raw, grid, fgrid, L=3, B_R=0.3)
        assert np.all(F.values == 0)

    def test_hermitian_and_conjugate_symmetric_exactly(self, estimated):
        F, _, fgrid = estimated
        values = F.values
        np.testing.assert_array_equal(values, np.conj(np.swapaxes(values, -1, -2)))
        np.testing.assert_array_equal(values[fgrid.mirror_index], np.conj(values))

    def test_non_negative_after_clipping(self, estimated):
        F, _, _ = estimated
        eigvals = np.linalg.eigvalsh(F.values)
        assert eigvals.min() >= -1e-10 * max(1.0, float(eigvals.max()))

    def test_span_must_fit_frequency_grid(self, estimated, sparse_scenario):
        _, data, _, _ = sparse_scenario
        raw = SmoothingService.raw_covariances(data, L=5)
        with pytest.raises(ConfigException):
            SpectralService.estimate_spectral_density(raw, SpatialGrid(p=21), FrequencyGrid(n_freq=10), L=5, B_R=0.2)

    def test_lag_normalizers(self):
        normalizers = SpectralService.lag_normalizers(np.array([2, 0, 1, 3]), L=2)
        # 𝒩_0 = T (mean N² - mean N) = 4 (14/4 - 6/4)
        assert normalizers[0] == pytest.approx(8.0)
        assert normalizers[1] == normalizers[-1] == pytest.approx(3 * 1.5 ** 2)
        with pytest.raises(InsufficientDataException):
            SpectralService.lag_normalizers(np.array([1, 1, 0]), L=2)

    def test_matches_pooled_weighted_least_squares(self, rng, grid, fgrid):
        data = random_sparse(rng, T=40, per_time=4)
        L, B = 3, 0.35
        raw = SmoothingService.raw_covariances(data, L)
        F = SpectralService.estimate_spectral_density(raw, grid, fgrid, L, B, clip=False)

        for i, j in [(4, 15), (10, 10), (18, 2)]:
            x, y = grid.points[i], grid.points[j]
            forward = pooled_system(data, L, B, x, y)
            backward = pooled_system(data, L, B, y, x)
            for m in (5, 20, 31):
                omega = fgrid.omegas[m]

                def fitted(system):
                    normal, rhs = system
                    total = sum(rhs[h] * np.exp(-1j * h * omega) for h in rhs)
                    return (L / (2 * np.pi)) * np.linalg.solve(normal, total)[0]

                # proyección hermítica: (F(x, y) + conj F(y, x)) / 2
                expected = 0.5 * (fitted(forward) + np.conj(fitted(backward)))
                assert F.values[m, i, j] == pytest.approx(expected, rel=1e-8, abs=1e-12)


class TestCrossSpectral:

    def test_zero_response_gives_zero(self, sparse_scenario, grid, fgrid):
        _, data, _, _ = sparse_scenario
        cross = SpectralService.estimate_cross_spectral(data, ScalarTS(z=np.zeros(data.T)), grid, fgrid, L=5, B_C=0.2)
        assert np.all(cross.values == 0)

    def test_matches_brute_force_weighted_least_squares(self, sparse_scenario, grid, fgrid):
        _, data, Z, _ = sparse_scenario
        L, B = 4, 0.2
        z = Z.z.copy()
        z[[3, 17]] = np.nan
        Zm = ScalarTS(z=z)
        cross = SpectralService.estimate_cross_spectral(data, Zm, grid, fgrid, L, B)

        bartlett = BartlettWeights(L=L)
        for m in (5, 20, 32):
            omega = fgrid.omegas[m]
            for i in (0, 9, 20):
                x0 = grid.points[i]
                normal = np.zeros((2, 2))
                rhs = np.zeros(2, dtype=complex)
                for h in range(-(L - 1), L):
                    a_h = bartlett.weight(h) / data.T
                    for t, xk, yk in zip(data.t, data.x, data.y):
                        s = t + h
                        if s < 1 or s > data.T or not np.isfinite(z[s - 1]):
                            continue
                        d = (xk - x0) / B
                        weight = a_h * epanechnikov(d)
                        design = np.array([1.0, d])
                        normal += weight * np.outer(design, design)
                        rhs += weight * design * z[s - 1] * yk * np.exp(-1j * h * omega)
                expected = (L / (2 * np.pi)) * np.linalg.solve(normal, rhs)[0]
                assert cross.values[m, i] == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_conjugate_symmetric(self, sparse_scenario, grid, fgrid):
        _, data, Z, _ = sparse_scenario
        cross = SpectralService.estimate_cross_spectral(data, Z, grid, fgrid, L=5, B_C=0.2)
        np.testing.assert_array_equal(cross.values[fgrid.mirror_index], np.conj(cross.values))

    def test_length_mismatch(self, sparse_scenario, grid, fgrid):
        _, data, Z, _ = sparse_scenario
        with pytest.raises(DataException):
            SpectralService.estimate_cross_spectral(data, ScalarTS(z=Z.z[:-1]), grid, fgrid, L=5, B_C=0.2)


class TestInversion:

    def test_constant_density_inverts_to_white_noise(self, grid, fgrid):
        C = np.outer(np.sin(np.pi * grid.points), np.sin(np.pi * grid.points)) + np.eye(grid.p)
        values = np.tile(C / (2 * np.pi), (fgrid.n_freq, 1, 1)).astype(complex)
        F = SpectralDensityEstimate(values=values, L=4, grid=grid, fgrid=fgrid)
        R = SpectralService.invert_to_autocov(F, fgrid)
        assert R.max_lag == 3
        np.testing.assert_allclose(R.at(0), C, atol=1e-12)
        for h in (1, 2, 3, -2):
            np.testing.assert_allclose(R.at(h), 0.0, atol=1e-12)

    def test_inversion_recovers_lag_one(self, grid, fgrid):
        # F_ω = (R0 + R1 e^{-iω} + R1^T e^{iω}) / 2π
        R0 = 2.0 * np.eye(grid.p)
        R1 = 0.5 * np.outer(np.ones(grid.p), np.linspace(0, 1, grid.p))
        exps = fgrid.exponentials([1])[0]
        values = (R0[None] + R1[None] * exps[:, None, None] + R1.T[None] * np.conj(exps)[:, None, None]) / (2 * np.pi)
        F = SpectralDensityEstimate(values=values, L=3, grid=grid, fgrid=fgrid)
        R = SpectralService.invert_to_autocov(F, fgrid)
        np.testing.assert_allclose(R.at(1), R1, atol=1e-12)
        np.testing.assert_allclose(R.at(-1), R1.T, atol=1e-12)
        np.testing.assert_allclose(R.at(2), 0.0, atol=1e-12)

    def test_lag_zero_round_trip_is_pooled_fit(self, rng, grid, fgrid):
        # ∫ F̂_ω dω deja sólo el término h = 0 del ajuste agrupado
        data = random_sparse(rng, T=40, per_time=4)
        L, B = 3, 0.35
        raw = SmoothingService.raw_covariances(data, L)
        F = SpectralService.estimate_spectral_density(raw, grid, fgrid, L, B, clip=False)
        R = SpectralService.invert_to_autocov(F, fgrid)

        for i, j in [(4, 15), (10, 10), (18, 2), (0, 20)]:
            x, y = grid.points[i], grid.points[j]
            lag_zero = []
            for u, v in ((x, y), (y, x)):
                normal, rhs = pooled_system(data, L, B, u, v)
                lag_zero.append(L * np.linalg.solve(normal, rhs[0])[0])
            expected = 0.5 * (lag_zero[0] + lag_zero[1])
            assert R.at(0)[i, j] == pytest.approx(expected, rel=1e-8, abs=1e-12)


class TestEigendecomposition:

    def test_rank_one(self, grid, fgrid):
        v = np.sin(np.pi * grid.points)
        v = v / np.sqrt(grid.quad_weight * np.sum(v ** 2))
        lam = 1.0 + 0.5 * np.cos(fgrid.omegas)
        values = (lam[:, None, None] * np.outer(v, v)[None]).astype(complex)
        F = SpectralDensityEstimate(values=values, L=2, grid=grid, fgrid=fgrid)
        eig = SpectralService.eigendecompose(F, grid)

        np.testing.assert_allclose(eig.eigenvalues[:, 0], lam, rtol=1e-10)
        np.testing.assert_allclose(eig.eigenvalues[:, 1:], 0.0, atol=1e-10)
        overlap = np.abs(grid.quad_weight * np.conj(eig.eigenvectors[:, :, 0]) @ v)
        np.testing.assert_allclose(overlap, 1.0, rtol=1e-10)
        assert eig.leading == pytest.approx(1.5)

    def test_orthonormal_and_descending(self, estimated):
        F, grid, fgrid = estimated
        eig = SpectralService.eigendecompose(F, grid)
        assert np.all(np.diff(eig.eigenvalues, axis=1) <= 1e-12)
        assert np.all(eig.eigenvalues >= 0)
        for m in (0, 10, 40):
            phi = eig.eigenvectors[m]
            gram = grid.quad_weight * np.conj(phi.T) @ phi
            np.testing.assert_allclose(gram, np.eye(grid.p), atol=1e-10)
        np.testing.assert_array_equal(eig.eigenvectors[fgrid.mirror_index[10]], np.conj(eig.eigenvectors[10]))
