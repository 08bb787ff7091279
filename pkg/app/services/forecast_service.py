"""
ForecastService - BLUP de las curvas latentes y pronóstico de la respuesta

Responsabilidades:
1. Ensamblar la matriz de Gram en banda H S H* + σ² I
2. BLUP con ventana deslizante (un sistema SPD por tiempo objetivo)
   o exacto con Cholesky en banda
3. Ẑ_s = Σ_{|k|<=M} ⟨b_k, Π̂(X_{s-k} | 𝕐)⟩
4. Pronóstico oráculo con dinámica y filtros verdaderos

Principios:
- BANDA: R̂_h = 0 para |h| > max_lag, así la Gram ordenada por tiempo es
  una matriz en banda
- PARALELO: los tiempos objetivo son independientes
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Tuple, Union
import logging

import numpy as np
from scipy import linalg as sla

from app.core.config import get_settings
from app.core.exceptions import ConfigException
from app.core.linalg import interpolation_matrix, jittered_banded_solve, jittered_cholesky
from app.schemas.data import SparseFTS
from app.schemas.forecast import ForecastResult, PredictedCurves, StackedModel
from app.schemas.grids import NoiseEstimate, SpatialGrid
from app.schemas.regression import FilterSet
from app.schemas.spectral import AutocovSequence

logger = logging.getLogger(__name__)

Window = Union[int, str, None]


class ForecastService:
    """Service para el BLUP y el pronóstico de la respuesta"""

    # ==================== MODELO ====================

    @staticmethod
    def build_model(
        data: SparseFTS,
        R: AutocovSequence,
        sigma2: NoiseEstimate,
        grid: SpatialGrid,
        window: Window = "auto"
    ) -> StackedModel:
        """
        Args:
            window: "auto" = max_lag + 1 (el span L de Bartlett),
                None = solución exacta, entero = semiancho explícito
        """
        if window == "auto":
            window = R.max_lag + 1
        return StackedModel(
            data=data,
            R=R,
            sigma2=sigma2,
            grid=grid,
            window=window,
            interpolation=interpolation_matrix(data.x, grid.points),
        )

    @staticmethod
    def gram_band(model: StackedModel) -> Tuple[np.ndarray, int]:
        """
        Gram G[i, k] = l_i R_{s_i - s_k} l_k^T + σ² δ_ik en banda superior

        Returns:
            (ab, u) con ab[u + i - k, k] = G[i, k] para i <= k
        """
        data = model.data
        interp = model.interpolation
        H = model.R.max_lag
        offsets = data.offsets()
        n = data.n_obs

        u = 0
        for s in range(1, data.T + 1):
            if offsets[s] > offsets[s - 1]:
                first = offsets[max(s - H, 1) - 1]
                u = max(u, int(offsets[s] - 1 - first))

        band = np.zeros((u + 1, n))
        for h in range(0, H + 1):
            left = interp @ model.R.at(h)
            for s in range(h + 1, data.T + 1):
                rows = np.arange(offsets[s - 1], offsets[s])
                cols = np.arange(offsets[s - h - 1], offsets[s - h])
                if rows.size == 0 or cols.size == 0:
                    continue
                block = left[rows] @ interp[cols].T
                I, K = np.meshgrid(rows, cols, indexing="ij")
                if h == 0:
                    keep = K <= I
                    I, K, block = I[keep], K[keep], block[keep]
                band[u + K - I, I] = block

        band[u] += model.sigma2.sigma2
        return band, u

    @staticmethod
    def window_gram(band: np.ndarray, u: int, start: int, stop: int) -> np.ndarray:
        """Submatriz densa G[start:stop, start:stop] desde la banda"""
        idx = np.arange(start, stop)
        lo = np.minimum(idx[:, None], idx[None, :])
        hi = np.maximum(idx[:, None], idx[None, :])
        diff = hi - lo
        inside = diff <= u
        return np.where(inside, band[u - np.minimum(diff, u), hi], 0.0)

    # ==================== BLUP ====================

    @staticmethod
    def blup_latent(
        data: SparseFTS,
        R: AutocovSequence,
        sigma2: NoiseEstimate,
        grid: SpatialGrid,
        M: int,
        window: Window = "auto"
    ) -> PredictedCurves:
        """
        Π̂(X_t | 𝕐) para t ∈ [1 - M, T + M]

        Con ventana finita se condiciona en las observaciones con
        |s - t| <= window; con window=None la solución es exacta.
        """
        if M < 0:
            raise ConfigException(message="M debe ser no negativo", details={"M": M})

        model = ForecastService.build_model(data, R, sigma2, grid, window)
        band, u = ForecastService.gram_band(model)
        targets = np.arange(1 - M, data.T + M + 1)

        if model.window is None:
            values = ForecastService._full_blup(model, band, targets)
        else:
            values = ForecastService._windowed_blup(model, band, u, targets)

        logger.info(f"✅ BLUP de {targets.size} curvas (ventana={model.window}, σ²={sigma2.sigma2:.3e})")
        return PredictedCurves(values=values, first_time=int(targets[0]))

    @staticmethod
    def _spread(model: StackedModel, alpha: np.ndarray, start: int, stop: int, first_time: int, n_times: int) -> np.ndarray:
        """v_s = Σ_{i en s} α_i l_i para s = first_time..first_time + n_times - 1"""
        V = np.zeros((n_times, model.grid.p))
        np.add.at(V, model.data.t[start:stop] - first_time, alpha[:, None] * model.interpolation[start:stop])
        return V

    @staticmethod
    def _full_blup(model: StackedModel, band: np.ndarray, targets: np.ndarray) -> np.ndarray:
        data = model.data
        alpha = jittered_banded_solve(band, data.y)
        V = ForecastService._spread(model, alpha, 0, data.n_obs, 1, data.T)

        H = model.R.max_lag
        out = np.zeros((targets.size, model.grid.p))
        for h in range(-H, H + 1):
            # X̂_t += R_h v_{t-h}
            source = targets - h
            valid = (source >= 1) & (source <= data.T)
            if valid.any():
                out[valid] += V[source[valid] - 1] @ model.R.at(h).T
        return out

    @staticmethod
    def _windowed_blup(model: StackedModel, band: np.ndarray, u: int, targets: np.ndarray) -> np.ndarray:
        settings = get_settings()
        data = model.data
        offsets = data.offsets()
        W = model.window

        def solve(t: int) -> np.ndarray:
            lo, hi = max(1, t - W), min(data.T, t + W)
            if lo > hi:
                return np.zeros(model.grid.p)
            start, stop = int(offsets[lo - 1]), int(offsets[hi])
            if stop == start:
                return np.zeros(model.grid.p)
            gram = ForecastService.window_gram(band, u, start, stop)
            factor = jittered_cholesky(gram)
            alpha = sla.cho_solve(factor, data.y[start:stop], check_finite=False)
            V = ForecastService._spread(model, alpha, start, stop, lo, hi - lo + 1)
            curve = np.zeros(model.grid.p)
            for s in range(lo, hi + 1):
                if abs(t - s) <= model.R.max_lag:
                    curve += model.R.at(t - s) @ V[s - lo]
            return curve

        with ThreadPoolExecutor(max_workers=settings.MAX_THREADS) as executor:
            curves = list(executor.map(solve, [int(t) for t in targets]))
        return np.array(curves).reshape(targets.size, model.grid.p)

    # ==================== RESPUESTA ====================

    @staticmethod
    def forecast_response(
        curves: PredictedCurves,
        filters: FilterSet,
        s_range: Iterable[int],
        grid: SpatialGrid
    ) -> ForecastResult:
        """
        Ẑ_s = Σ_{|k|<=M} w Σ_x b_k(x) Π̂(X_{s-k} | 𝕐)(x)

        Raises:
            MissingCurveException si falta alguna curva en [s - M, s + M]
        """
        times = np.asarray(list(s_range), dtype=int)
        z_hat = np.empty(times.size)
        for index, s in enumerate(times):
            window = curves.window(int(s) - filters.M, int(s) + filters.M)
            # window[i] es X̂_{s - M + i}, emparejado con b_{M - i}
            z_hat[index] = grid.quad_weight * np.sum(filters.values[::-1] * window)
        return ForecastResult(curves=curves, times=times, z_hat=z_hat)

    @staticmethod
    def oracle_forecast(
        data: SparseFTS,
        R_true: AutocovSequence,
        sigma2_true: NoiseEstimate,
        filters_true: FilterSet,
        s_range: Iterable[int],
        grid: SpatialGrid,
        window: Window = "auto"
    ) -> ForecastResult:
        """Pasos 3 y 4 del algoritmo con R_h, σ² y b_k verdaderos"""
        curves = ForecastService.blup_latent(data, R_true, sigma2_true, grid, filters_true.M, window)
        result = ForecastService.forecast_response(curves, filters_true, s_range, grid)
        logger.info(f"✅ Pronóstico oráculo para {result.times.size} tiempos")
        return result
