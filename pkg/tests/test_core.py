"""
Tests de core (kernels, álgebra lineal, excepciones) y de los schemas base
"""

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import (
    AllFoldsDegenerateException,
    ConfigException,
    DataException,
    DomainException,
    EmptyLagWarning,
    InsufficientDataException,
    NumericException,
    ParseException,
    SingularMException,
    SolveFailureException,
)
from app.core.kernels import (
    bartlett_span_default,
    bartlett_weight,
    epanechnikov,
    intercept_weights,
    local_polynomial_line,
)
from app.core.linalg import interpolation_matrix, jittered_banded_solve, jittered_cholesky
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.grids import BartlettWeights, FrequencyGrid, NoiseEstimate, SpatialGrid
from app.schemas.regression import FilterSet
from app.schemas.spectral import AutocovSequence, RawCovariances
from app.services.smoothing_service import SmoothingService


# ==================== KERNELS ====================

class TestKernels:

    def test_epanechnikov_values(self):
        assert epanechnikov(0.0) == pytest.approx(0.75)
        assert epanechnikov(1.0) == 0.0
        assert epanechnikov(2.0) == 0.0
        np.testing.assert_allclose(epanechnikov(np.array([-0.5, 0.5, -3.0])), [0.5625, 0.5625, 0.0])

    @pytest.mark.parametrize("T, expected", [(300, 13), (1, 2), (1000, 20), (60, 7)])
    def test_bartlett_span_default(self, T, expected):
        assert bartlett_span_default(T) == expected

    @pytest.mark.parametrize("L, h, expected", [(4, 0, 1.0), (4, 2, 0.5), (4, -2, 0.5), (4, 4, 0.0), (4, 5, 0.0)])
    def test_bartlett_weight(self, L, h, expected):
        assert bartlett_weight(L, h) == pytest.approx(expected)

    def test_bartlett_weights_schema(self):
        weights = BartlettWeights(L=3)
        np.testing.assert_array_equal(weights.lags, np.arange(-3, 4))
        np.testing.assert_allclose(weights.W, [0.0, 1 / 3, 2 / 3, 1.0, 2 / 3, 1 / 3, 0.0])

    def test_intercept_weights_falls_back(self):
        normal = np.array([
            [[2.0, 0.0], [0.0, 1.0]],   # orden completo
            [[1.0, 0.0], [0.0, 0.0]],   # pendiente sin información
            [[0.0, 0.0], [0.0, 0.0]],   # sin puntos
        ])
        e, order = intercept_weights(normal, 1e12)
        np.testing.assert_array_equal(order, [2, 1, 0])
        np.testing.assert_allclose(e[0], [0.5, 0.0])
        np.testing.assert_allclose(e[1], [1.0, 0.0])
        assert np.all(np.isnan(e[2]))

    def test_local_linear_reproduces_affine(self):
        locations = np.linspace(0.0, 1.0, 50)
        points = np.linspace(0.0, 1.0, 11)
        fitted, order = local_polynomial_line(locations, 2.0 + 3.0 * locations, points, 0.3, 1, 1e12)
        assert np.all(order == 2)
        np.testing.assert_allclose(fitted, 2.0 + 3.0 * points, rtol=1e-10)


# ==================== ÁLGEBRA LINEAL ====================

class TestLinalg:

    def test_interpolation_identity_on_grid(self):
        points = np.linspace(0.0, 1.0, 5)
        np.testing.assert_allclose(interpolation_matrix(points, points), np.eye(5), atol=1e-12)

    def test_interpolation_exact_for_linear(self):
        points = np.linspace(0.0, 1.0, 7)
        locations = np.array([0.0, 0.13, 0.5, 0.91, 1.0])
        interp = interpolation_matrix(locations, points)
        np.testing.assert_allclose(interp.sum(axis=1), 1.0)
        np.testing.assert_allclose(interp @ (1.0 - 2.0 * points), 1.0 - 2.0 * locations, atol=1e-12)

    def test_jittered_cholesky_singular_psd(self):
        c, lower = jittered_cholesky(np.ones((3, 3)))
        assert lower
        assert np.all(np.isfinite(np.tril(c)))

    def test_jittered_cholesky_fails_on_negative(self):
        with pytest.raises(SolveFailureException):
            jittered_cholesky(-np.eye(3))

    def test_banded_solve_matches_dense(self):
        n = 6
        dense = 4.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
        band = np.vstack([np.r_[0.0, np.ones(n - 1)], 4.0 * np.ones(n)])
        rhs = np.arange(n, dtype=float)
        np.testing.assert_allclose(jittered_banded_solve(band, rhs), np.linalg.solve(dense, rhs), rtol=1e-12)


# ==================== EXCEPCIONES ====================

class TestExceptions:

    def test_exit_codes_by_family(self):
        assert ConfigException("x").exit_code == 2
        assert InsufficientDataException("x").exit_code == 3
        assert ParseException(path="a.csv", line=4, reason="r").exit_code == 3
        assert SingularMException("x").exit_code == 4
        assert AllFoldsDegenerateException("x").exit_code == 4

    def test_structured_details(self):
        exc = DomainException(path="a.csv", line=3, field="x", value=1.5)
        assert isinstance(exc, DataException)
        assert exc.details == {"path": "a.csv", "line": 3, "field": "x", "value": 1.5}
        assert "línea 3" in exc.message
        assert isinstance(SolveFailureException("x"), NumericException)


# ==================== GRILLAS ====================

class TestGrids:

    def test_spatial_grid(self):
        grid = SpatialGrid(p=11)
        assert grid.points[0] == 0.0 and grid.points[-1] == 1.0
        assert grid.quad_weight == pytest.approx(1 / 11)
        assert grid.inner(np.ones(11), np.ones(11)) == pytest.approx(1.0)

    def test_frequency_grid_layout(self):
        fgrid = FrequencyGrid(n_freq=8)
        assert fgrid.omegas[0] == -np.pi
        np.testing.assert_allclose(np.diff(fgrid.omegas), fgrid.step)
        np.testing.assert_array_equal(fgrid.half_indices, np.arange(5))

    @pytest.mark.parametrize("n_freq", [7, 16, 64])
    def test_exponentials_conjugate_exactly_at_mirror(self, n_freq):
        fgrid = FrequencyGrid(n_freq=n_freq)
        exps = fgrid.exponentials(np.arange(-5, 6))
        np.testing.assert_array_equal(exps[:, fgrid.mirror_index], np.conj(exps))
        np.testing.assert_allclose(exps, np.exp(-1j * np.arange(-5, 6)[:, None] * fgrid.omegas[None, :]), atol=1e-12)

    def test_noise_estimate_positive(self):
        with pytest.raises(ValidationError):
            NoiseEstimate(sigma2=0.0)


# ==================== DATOS ====================

class TestData:

    def test_sparse_from_lists(self):
        data = SparseFTS.from_lists([[(0.2, 1.5), (0.8, -0.3)], [], [(0.5, 0.7)]])
        assert data.T == 3
        np.testing.assert_array_equal(data.counts, [2, 0, 1])
        assert data.obs(3) == [(0.5, 0.7)]
        np.testing.assert_array_equal(data.offsets(), [0, 2, 2, 3])

    @pytest.mark.parametrize("x", [1.5, -0.1])
    def test_sparse_rejects_location_outside_unit_interval(self, x):
        with pytest.raises(ValidationError):
            SparseFTS(T=1, t=[1], x=[x], y=[0.0])

    def test_sparse_requires_observations(self):
        with pytest.raises(ValidationError):
            SparseFTS(T=3, t=[], x=[], y=[])

    def test_sparse_is_read_only(self):
        data = SparseFTS.from_lists([[(0.2, 1.0)]])
        with pytest.raises(ValueError):
            data.y[0] = 2.0

    def test_sparse_truncated_keeps_T(self):
        data = SparseFTS.from_lists([[(0.2, 1.0)], [(0.4, 2.0)], [(0.6, 3.0)]])
        cut = data.truncated(2)
        assert cut.T == 3
        np.testing.assert_array_equal(cut.counts, [1, 1, 0])

    def test_scalar_requires_two_observed(self):
        with pytest.raises(ValidationError):
            ScalarTS(z=[1.0, np.nan, np.nan])
        z = ScalarTS(z=[1.0, np.nan, 3.0, 5.0])
        assert z.mean() == pytest.approx(3.0)
        np.testing.assert_array_equal(z.filled(), [1.0, 0.0, 3.0, 5.0])
        assert np.isnan(z.truncated(3).z[3])

    def test_dense_centered(self):
        curves = np.array([[1.0, 2.0], [3.0, 4.0]])
        dense = DenseFTS(curves=curves)
        np.testing.assert_allclose(dense.centered(), [[-1.0, -1.0], [1.0, 1.0]])


# ==================== COVARIANZAS CRUDAS ====================

class TestRawCovariances:

    def test_two_times_single_product(self):
        data = SparseFTS.from_lists([[(0.2, 1.0)], [(0.5, 2.0)]])
        with pytest.warns(EmptyLagWarning):
            raw = SmoothingService.raw_covariances(data, L=1)
        u, v, g, t = raw.pairs(1)
        np.testing.assert_allclose(u, [0.5])
        np.testing.assert_allclose(v, [0.2])
        np.testing.assert_allclose(g, [2.0])
        np.testing.assert_array_equal(t, [1])
        assert raw.pair_count(0) == 0
        assert raw.pairs(0)[2].size == 0

    def test_negative_lag_swaps_locations(self):
        data = SparseFTS.from_lists([[(0.2, 1.0)], [(0.5, 2.0)]])
        raw = RawCovariances(data=data, L=1)
        u, v, g, t = raw.pairs(-1)
        np.testing.assert_allclose(u, [0.2])
        np.testing.assert_allclose(v, [0.5])
        np.testing.assert_array_equal(t, [2])

    def test_lag0_excludes_diagonal(self):
        data = SparseFTS.from_lists([[(0.1, 2.0), (0.9, 3.0)]])
        u, v, g, _ = RawCovariances(data=data, L=0).pairs(0)
        np.testing.assert_allclose(g, [6.0, 6.0])
        assert sorted(zip(u.tolist(), v.tolist())) == [(0.1, 0.9), (0.9, 0.1)]

    def test_pair_count_matches_pairs(self, rng):
        from tests.conftest import random_sparse

        data = random_sparse(rng, T=8, per_time=3)
        raw = RawCovariances(data=data, L=2)
        for h in range(-2, 3):
            assert raw.pair_count(h) == raw.pairs(h)[2].size

    def test_span_must_be_below_T(self):
        data = SparseFTS.from_lists([[(0.2, 1.0)], [(0.5, 2.0)]])
        with pytest.raises(ConfigException):
            SmoothingService.raw_covariances(data, L=2)


# ==================== SECUENCIAS ====================

class TestSequences:

    def test_autocov_from_nonnegative(self):
        R0 = np.eye(2)
        R1 = np.array([[0.0, 1.0], [0.0, 0.0]])
        R = AutocovSequence.from_nonnegative(np.array([R0, R1]))
        assert R.max_lag == 1
        np.testing.assert_array_equal(R.at(-1), R1.T)
        np.testing.assert_array_equal(R.at(5), np.zeros((2, 2)))

    def test_filterset_helpers(self):
        filters = FilterSet.from_lags({0: np.ones(3), 2: 2.0 * np.ones(3)}, M=2, p=3)
        np.testing.assert_array_equal(filters.at(2), 2.0 * np.ones(3))
        np.testing.assert_array_equal(filters.at(-1), np.zeros(3))
        np.testing.assert_allclose(filters.norms(1 / 3), [0, 0, 1, 0, 2])
        assert filters.trimmed(1).M == 1
        assert filters.padded(4).values.shape == (9, 3)
        np.testing.assert_array_equal(filters.padded(4).at(2), filters.at(2))
