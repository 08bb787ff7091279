"""
FunctionalResponseService - Regresión con respuesta funcional dispersa

Responsabilidades:
1. f̂^{ZX}_ω(z, x) desde productos V_{t+h,j} Y_tk (dos series dispersas)
2. Transferencia como operador (truncada o Tikhonov)
3. Núcleos B_k(z, x) por integración de Fourier
4. Pronóstico de curvas de respuesta Σ_k B_k Π̂(X_{s-k} | 𝕐)

Principios:
- Mismo suavizador de superficie agrupado que la densidad espectral
- Sin exclusión de lag 0: los ruidos de las dos series son independientes
"""

from typing import Iterable, Optional, Union
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConfigException, DataException
from app.core.kernels import intercept_weights
from app.schemas.data import SparseFTS
from app.schemas.extensions import OperatorFilterSet, OperatorTransferEstimate
from app.schemas.forecast import ForecastResult, PredictedCurves
from app.schemas.grids import BartlettWeights, FrequencyGrid, SpatialGrid
from app.schemas.regression import RegularizationMethod
from app.schemas.spectral import CrossSpectralEstimate, EigenSystem
from app.services.regression_service import RegressionService
from app.services.smoothing_service import SmoothingService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)


class FunctionalResponseService:
    """Service para el modelo con respuesta funcional"""

    # ==================== DENSIDAD CRUZADA ====================

    @staticmethod
    def est_cross_spectral_functional(
        dataX: SparseFTS,
        dataZ: SparseFTS,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        B_R: float
    ) -> CrossSpectralEstimate:
        """
        f̂^{ZX}_ω(z, x) = (L/2π) ĉ_0 del ajuste agrupado en los lags |h| < L

        Pesos W_h / 𝒩_h con 𝒩_h = (T - |h|) N̄^Z N̄^X.
        """
        SpectralService.check_span(fgrid, L)
        if B_R <= 0:
            raise ConfigException(message="B_R debe ser positivo", details={"B_R": B_R})
        if dataZ.T != dataX.T:
            raise DataException(
                message=f"La respuesta tiene T={dataZ.T} y el regresor T={dataX.T}",
                details={"T_Z": dataZ.T, "T_X": dataX.T}
            )

        settings = get_settings()
        T = dataX.T
        scale = float(np.mean(dataX.counts)) * float(np.mean(dataZ.counts))
        bartlett = BartlettWeights(L=L)

        basisZ = SmoothingService.kernel_basis(dataZ.x, grid.points, B_R, 2)
        basisX = SmoothingService.kernel_basis(dataX.x, grid.points, B_R, 2)
        plainZ = SmoothingService.per_time(dataZ, basisZ)
        plainX = SmoothingService.per_time(dataX, basisX)
        weightedZ = SmoothingService.per_time(dataZ, basisZ, dataZ.y)
        weightedX = SmoothingService.per_time(dataX, basisX, dataX.y)

        logger.info(f"🔄 Estimando densidad cruzada funcional (L={L}, B_R={B_R:.4f})")
        lags = np.arange(-(L - 1), L)
        weights = np.array([bartlett.weight(int(h)) / ((T - abs(int(h))) * scale) for h in lags])
        A = np.zeros((grid.p, grid.p, 3, 3))
        moments = np.empty((lags.size, grid.p, grid.p, 3))

        for index, h in enumerate(lags):
            h = int(h)

            def moment(r: int, s: int, with_g: bool) -> np.ndarray:
                if with_g:
                    return SmoothingService.lag_moment(weightedZ[r], weightedX[s], h)
                return SmoothingService.lag_moment(plainZ[r], plainX[s], h)

            normal, rhs = SmoothingService.surface_system(moment)
            A += weights[index] * normal
            moments[index] = rhs

        e, order = intercept_weights(A, settings.SINGULAR_COND)
        SmoothingService.check_solved(order, grid.points, "est_cross_spectral_functional")

        coefficients = weights[:, None, None] * np.einsum("xyd,hxyd->hxy", e, moments)
        exps = fgrid.exponentials(lags)[:, fgrid.half_indices]
        half = (L / (2.0 * np.pi)) * np.einsum("hxy,hm->mxy", coefficients, exps)
        values = SpectralService.mirror(half, fgrid)

        logger.info(f"✅ Densidad cruzada funcional estimada en {fgrid.n_freq} frecuencias")
        return CrossSpectralEstimate(values=values, L=L, bandwidth=B_R)

    # ==================== TRANSFERENCIA ====================

    @staticmethod
    def operator_transfer(
        cross: CrossSpectralEstimate,
        eig: EigenSystem,
        method: RegularizationMethod,
        param: float,
        grid: SpatialGrid
    ) -> OperatorTransferEstimate:
        """
        B̂_ω = Σ_j (F̂^{ZX}_ω φ_j) / λ_j ⊗ conj(φ_j)

        Truncada: sólo λ_j > υ. Tikhonov: λ_j + ρ en los p modos.
        """
        method = RegularizationMethod(method)
        if param <= 0:
            raise ConfigException(message="El parámetro de regularización debe ser positivo", details={"param": param})
        if cross.values.ndim != 3:
            raise ConfigException(message="operator_transfer requiere una densidad cruzada (n_freq, p, p)")

        # (F φ_j)(z) = w Σ_x F(z, x) φ_j(x)
        applied = grid.quad_weight * np.einsum("mzx,mxj->mzj", cross.values, eig.eigenvectors)
        if method == RegularizationMethod.TRUNCATION:
            keep = eig.eigenvalues > param
            safe = np.where(keep, eig.eigenvalues, 1.0)
            coefficients = np.where(keep[:, None, :], applied / safe[:, None, :], 0.0)
        else:
            coefficients = applied / (eig.eigenvalues + param)[:, None, :]

        values = np.einsum("mzj,mxj->mzx", coefficients, np.conj(eig.eigenvectors))
        logger.debug(f"Transferencia de operador {method.value} param={param:.3e}")
        return OperatorTransferEstimate(values=values, method=method, param=param)

    @staticmethod
    def operator_filters(
        B: OperatorTransferEstimate,
        fgrid: FrequencyGrid,
        grid: SpatialGrid,
        M: Optional[Union[int, str]] = "auto",
        K_max: Optional[int] = None
    ) -> OperatorFilterSet:
        """B_k(z, x) = (1/2π) Σ_ω B̂_ω(z, x) e^{ikω} Δω, recortado como en el caso escalar"""
        settings = get_settings()
        K_max = settings.K_MAX if K_max is None else K_max
        if M not in (None, "auto"):
            K_max = max(K_max, int(M))
        values = RegressionService.fourier_coefficients(B.values, fgrid, K_max, "operator_filters")
        trial = OperatorFilterSet(M=K_max, values=values)
        chosen = RegressionService.choose_M(trial, grid.quad_weight) if M in (None, "auto") else int(M)
        logger.info(f"✅ Núcleos de filtro estimados (M={chosen})")
        return trial.trimmed(chosen)

    # ==================== PRONÓSTICO ====================

    @staticmethod
    def forecast_functional_response(
        curves: PredictedCurves,
        filters: OperatorFilterSet,
        s_range: Iterable[int],
        grid: SpatialGrid
    ) -> ForecastResult:
        """
        Ẑ_s(z) = Σ_{|k|<=M} w Σ_x B_k(z, x) Π̂(X_{s-k} | 𝕐)(x)

        Returns:
            ForecastResult con z_hat de shape (n_tiempos, p)
        """
        times = np.asarray(list(s_range), dtype=int)
        z_hat = np.empty((times.size, filters.values.shape[1]))
        reversed_kernels = filters.values[::-1]
        for index, s in enumerate(times):
            window = curves.window(int(s) - filters.M, int(s) + filters.M)
            z_hat[index] = grid.quad_weight * np.einsum("kzx,kx->z", reversed_kernels, window)
        return ForecastResult(curves=curves, times=times, z_hat=z_hat)

    @staticmethod
    def sparse_errors(result: ForecastResult, dataZ: SparseFTS, grid: SpatialGrid) -> np.ndarray:
        """Errores Ẑ_s(z_sj) - V_sj en las observaciones con s en result.times"""
        position = {int(s): i for i, s in enumerate(result.times)}
        errors = []
        for t, z, v in zip(dataZ.t, dataZ.x, dataZ.y):
            if int(t) in position:
                errors.append(np.interp(z, grid.points, result.z_hat[position[int(t)]]) - v)
        return np.asarray(errors)
