"""
Tests de ForecastService (BLUP exacto y con ventana, pronóstico de Z)
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigException, MissingCurveException
from app.core.linalg import interpolation_matrix
from app.schemas.data import SparseFTS
from app.schemas.forecast import PredictedCurves
from app.schemas.grids import NoiseEstimate, SpatialGrid
from app.schemas.regression import FilterSet
from app.schemas.spectral import AutocovSequence
from app.services.forecast_service import ForecastService
from app.services.simulation_service import SimulationService


def brute_force_blup(data: SparseFTS, R: AutocovSequence, sigma2: float, grid: SpatialGrid, targets) -> np.ndarray:
    """X̂_t = Cov(X_t, Y) Cov(Y)^{-1} Y con matrices densas"""
    interp = interpolation_matrix(data.x, grid.points)
    n = data.n_obs
    gram = np.empty((n, n))
    for i in range(n):
        for k in range(n):
            gram[i, k] = interp[i] @ R.at(int(data.t[i] - data.t[k])) @ interp[k]
    gram += sigma2 * np.eye(n)
    alpha = np.linalg.solve(gram, data.y)
    out = []
    for t in targets:
        cov = np.column_stack([R.at(int(t - s)) @ interp[i] for i, s in enumerate(data.t)])
        out.append(cov @ alpha)
    return np.array(out)


@pytest.fixture
def far_setup():
    grid = SpatialGrid(p=11)
    A, _ = SimulationService.far_operator(grid)
    R = SimulationService.far_autocov(A, SimulationService.innovation_kernel(grid), max_lag=8)
    rng = np.random.default_rng(42)
    per_time = [3, 0, 2, 4, 1, 0, 3, 2, 2, 1, 3, 2]
    lists = [[(float(rng.uniform()), float(rng.standard_normal())) for _ in range(n)] for n in per_time]
    return grid, R, SparseFTS.from_lists(lists)


class TestBlup:

    def test_exact_matches_dense_solution(self, far_setup):
        grid, R, data = far_setup
        sigma2 = NoiseEstimate(sigma2=0.05)
        curves = ForecastService.blup_latent(data, R, sigma2, grid, M=2, window=None)
        assert curves.first_time == -1 and curves.last_time == data.T + 2
        expected = brute_force_blup(data, R, 0.05, grid, curves.times)
        np.testing.assert_allclose(curves.values, expected, rtol=1e-8, atol=1e-10)

    def test_wide_window_equals_exact(self, far_setup):
        grid, R, data = far_setup
        sigma2 = NoiseEstimate(sigma2=0.05)
        exact = ForecastService.blup_latent(data, R, sigma2, grid, M=1, window=None)
        wide = ForecastService.blup_latent(data, R, sigma2, grid, M=1, window=100)
        np.testing.assert_allclose(wide.values, exact.values, rtol=1e-8, atol=1e-10)

    def test_auto_window_uses_autocov_span(self, far_setup):
        grid, R, data = far_setup
        model = ForecastService.build_model(data, R, NoiseEstimate(sigma2=0.1), grid, window="auto")
        assert model.window == R.max_lag + 1

    def test_iid_window_one_is_exact(self, far_setup):
        grid, _, data = far_setup
        K = SimulationService.innovation_kernel(grid)
        R = AutocovSequence(values=K[None].copy())
        sigma2 = NoiseEstimate(sigma2=0.2)
        windowed = ForecastService.blup_latent(data, R, sigma2, grid, M=2, window=1)
        exact = ForecastService.blup_latent(data, R, sigma2, grid, M=2, window=None)
        np.testing.assert_allclose(windowed.values, exact.values, rtol=1e-8, atol=1e-12)
        # sin observaciones a distancia <= max_lag la predicción es la media 0
        for t in (-1, 0, 2, 6, data.T + 1, data.T + 2):
            assert np.all(windowed.at(t) == 0)

    def test_negative_M_rejected(self, far_setup):
        grid, R, data = far_setup
        with pytest.raises(ConfigException):
            ForecastService.blup_latent(data, R, NoiseEstimate(sigma2=0.1), grid, M=-1)


class TestForecastResponse:

    def test_matches_manual_sum(self, rng):
        grid = SpatialGrid(p=7)
        curves = PredictedCurves(values=rng.standard_normal((10, grid.p)), first_time=-1)
        filters = FilterSet(M=2, values=rng.standard_normal((5, grid.p)))
        result = ForecastService.forecast_response(curves, filters, range(1, 7), grid)

        for index, s in enumerate(range(1, 7)):
            expected = sum(grid.inner(filters.at(k), curves.at(s - k)) for k in range(-2, 3))
            assert result.z_hat[index] == pytest.approx(expected, rel=1e-12)
        np.testing.assert_array_equal(result.times, np.arange(1, 7))

    def test_zero_filters(self, rng):
        grid = SpatialGrid(p=7)
        curves = PredictedCurves(values=rng.standard_normal((6, grid.p)), first_time=0)
        result = ForecastService.forecast_response(curves, FilterSet.zeros(1, grid.p), [1, 2, 3], grid)
        assert np.all(result.z_hat == 0)

    def test_constant_curve_and_unit_filter(self):
        grid = SpatialGrid(p=9)
        curves = PredictedCurves(values=np.full((5, grid.p), 2.5), first_time=1)
        filters = FilterSet.from_lags({0: np.ones(grid.p)}, M=0, p=grid.p)
        result = ForecastService.forecast_response(curves, filters, [1, 3, 5], grid)
        np.testing.assert_allclose(result.z_hat, 2.5, rtol=1e-12)

    def test_missing_curve(self):
        grid = SpatialGrid(p=5)
        curves = PredictedCurves(values=np.zeros((5, grid.p)), first_time=1)
        with pytest.raises(MissingCurveException):
            ForecastService.forecast_response(curves, FilterSet.zeros(1, grid.p), [1], grid)


class TestOracle:

    def test_oracle_is_blup_then_forecast(self, far_setup):
        grid, R, data = far_setup
        filters = FilterSet.from_lags({0: np.sin(2 * np.pi * grid.points), 1: np.ones(grid.p)}, M=1, p=grid.p)
        sigma2 = NoiseEstimate(sigma2=0.05)
        oracle = ForecastService.oracle_forecast(data, R, sigma2, filters, range(1, data.T + 1), grid, window=None)

        curves = ForecastService.blup_latent(data, R, sigma2, grid, M=1, window=None)
        direct = ForecastService.forecast_response(curves, filters, range(1, data.T + 1), grid)
        np.testing.assert_allclose(oracle.z_hat, direct.z_hat, rtol=1e-12)

    def test_matches_direct_response_covariance(self):
        # Ẑ_s = Cov(Z_s, Y) Cov(Y)^{-1} Y sin pasar por las curvas latentes
        grid = SpatialGrid(p=15)
        A, _ = SimulationService.far_operator(grid)
        R = SimulationService.far_autocov(A, SimulationService.innovation_kernel(grid), max_lag=8)
        rng = np.random.default_rng(3)
        lists = [[(float(rng.uniform()), float(rng.standard_normal())) for _ in range(int(rng.integers(0, 5)))]
                 for _ in range(30)]
        data = SparseFTS.from_lists(lists)
        filters = FilterSet.from_lags(
            {k: np.cos((k + 1) * np.pi * grid.points) / (1 + abs(k)) for k in range(-2, 3)}, M=2, p=grid.p
        )
        sigma2 = 0.05
        times = range(11, 21)

        oracle = ForecastService.oracle_forecast(data, R, NoiseEstimate(sigma2=sigma2), filters, times, grid, window=None)

        interp = interpolation_matrix(data.x, grid.points)
        n = data.n_obs
        gram = np.empty((n, n))
        for i in range(n):
            for k in range(n):
                gram[i, k] = interp[i] @ R.at(int(data.t[i] - data.t[k])) @ interp[k]
        gram += sigma2 * np.eye(n)
        alpha = np.linalg.solve(gram, data.y)
        for index, s in enumerate(times):
            cov = np.array([
                sum(grid.quad_weight * filters.at(k) @ R.at(int(s - k - t_i)) @ interp[i] for k in filters.lags)
                for i, t_i in enumerate(data.t)
            ])
            assert oracle.z_hat[index] == pytest.approx(cov @ alpha, rel=1e-6, abs=1e-10)
