"""
RegressionService - Inversión regularizada y filtros

Responsabilidades:
1. Rango por umbral de autovalores K_ω(υ)
2. Transferencia truncada y de Tikhonov
3. Recuperación de b_k por integración de Fourier
4. Elección de M (regla del 1% del pico)

Principios:
- Pareo bilineal: F^{ZX}_ω = B_ω F^X_ω implica
  b(ω) = Σ_j ⟨f^{ZX}_ω, φ_j⟩ / λ_j · conj(φ_j) con ⟨a, b⟩ = w Σ a b
"""

from typing import Optional, Union
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigException,
    DegenerateDenominatorException,
    ImagResidueException,
)
from app.schemas.grids import FrequencyGrid, SpatialGrid
from app.schemas.regression import FilterSet, RegularizationMethod, TransferEstimate
from app.schemas.spectral import CrossSpectralEstimate, EigenSystem

logger = logging.getLogger(__name__)


class RegressionService:
    """Service para la estimación de la función de transferencia y los filtros"""

    # ==================== RANGO ====================

    @staticmethod
    def threshold_rank(eig: EigenSystem, upsilon: float) -> np.ndarray:
        """K_ω(υ) = #{j : λ̂_j^ω > υ} por frecuencia"""
        if upsilon <= 0:
            raise ConfigException(message="υ debe ser positivo", details={"upsilon": upsilon})
        return np.sum(eig.eigenvalues > upsilon, axis=1)

    # ==================== TRANSFERENCIA ====================

    @staticmethod
    def pairings(fzx: np.ndarray, eig: EigenSystem, grid: SpatialGrid) -> np.ndarray:
        """⟨f^{ZX}_ω, φ_j^ω⟩ = w Σ_x f(x) φ_j(x), shape (n_freq, p)"""
        return grid.quad_weight * np.einsum("mx,mxj->mj", fzx, eig.eigenvectors)

    @staticmethod
    def expand(coefficients: np.ndarray, eig: EigenSystem) -> np.ndarray:
        """Σ_j c_j conj(φ_j) por frecuencia"""
        return np.einsum("mj,mxj->mx", coefficients, np.conj(eig.eigenvectors))

    @staticmethod
    def truncation_transfer(
        Fzx: CrossSpectralEstimate,
        eig: EigenSystem,
        upsilon: float,
        grid: SpatialGrid
    ) -> TransferEstimate:
        """b(ω) = Σ_{j <= K_ω} ⟨f̂^{ZX}_ω, φ̂_j⟩/λ̂_j · conj(φ̂_j)"""
        RegressionService.threshold_rank(eig, upsilon)
        keep = eig.eigenvalues > upsilon
        safe = np.where(keep, eig.eigenvalues, 1.0)
        coefficients = np.where(keep, RegressionService.pairings(Fzx.values, eig, grid) / safe, 0.0)
        values = RegressionService.expand(coefficients, eig)
        logger.debug(f"Transferencia truncada υ={upsilon:.3e}, K_ω máx={int(keep.sum(axis=1).max())}")
        return TransferEstimate(values=values, method=RegularizationMethod.TRUNCATION, param=upsilon)

    @staticmethod
    def tikhonov_transfer(
        Fzx: CrossSpectralEstimate,
        eig: EigenSystem,
        rho: float,
        grid: SpatialGrid
    ) -> TransferEstimate:
        """b(ω) = Σ_j ⟨f̂^{ZX}_ω, φ̂_j⟩/(λ̂_j + ρ) · conj(φ̂_j) sobre los p modos"""
        if rho <= 0:
            raise ConfigException(message="ρ debe ser positivo", details={"rho": rho})
        coefficients = RegressionService.pairings(Fzx.values, eig, grid) / (eig.eigenvalues + rho)
        values = RegressionService.expand(coefficients, eig)
        logger.debug(f"Transferencia de Tikhonov ρ={rho:.3e}")
        return TransferEstimate(values=values, method=RegularizationMethod.TIKHONOV, param=rho)

    @staticmethod
    def transfer(
        Fzx: CrossSpectralEstimate,
        eig: EigenSystem,
        method: RegularizationMethod,
        param: float,
        grid: SpatialGrid
    ) -> TransferEstimate:
        if RegularizationMethod(method) == RegularizationMethod.TRUNCATION:
            return RegressionService.truncation_transfer(Fzx, eig, param, grid)
        return RegressionService.tikhonov_transfer(Fzx, eig, param, grid)

    # ==================== FILTROS ====================

    @staticmethod
    def fourier_coefficients(values: np.ndarray, fgrid: FrequencyGrid, M: int, what: str) -> np.ndarray:
        """
        (1/2π) ∫ v(ω) e^{ikω} dω para |k| <= M sobre el primer eje

        Raises:
            ImagResidueException si la parte imaginaria supera IMAG_TOL
        """
        if fgrid.n_freq <= 2 * M:
            raise ConfigException(
                message=f"n_freq={fgrid.n_freq} debe ser mayor que 2M={2 * M}",
                details={"n_freq": fgrid.n_freq, "M": M}
            )
        if not np.all(np.isfinite(values)):
            raise DegenerateDenominatorException(
                message=f"Valores no finitos en {what} (densidad cruzada degenerada)",
                details={"what": what}
            )

        settings = get_settings()
        lags = np.arange(-M, M + 1)
        exps = fgrid.exponentials(-lags)
        flat = values.reshape(values.shape[0], -1)
        coefficients = (exps @ flat) / fgrid.n_freq
        coefficients = coefficients.reshape((lags.size,) + values.shape[1:])

        residue = float(np.max(np.abs(coefficients.imag))) if coefficients.size else 0.0
        if residue > settings.IMAG_TOL:
            raise ImagResidueException(what=what, residue=residue, tolerance=settings.IMAG_TOL)
        return coefficients.real

    @staticmethod
    def filters_from_transfer(B: TransferEstimate, fgrid: FrequencyGrid, M: int) -> FilterSet:
        """b_k = (1/2π) Σ_ω b(ω) e^{ikω} Δω"""
        values = RegressionService.fourier_coefficients(B.values, fgrid, M, "filters_from_transfer")
        return FilterSet(M=M, values=values)

    @staticmethod
    def choose_M(filters: FilterSet, quad_weight: float) -> int:
        """
        Menor M >= 1 con max_{|k|>M} ‖b_k‖ <= FILTER_NEGLIGIBLE · max_k ‖b_k‖
        """
        settings = get_settings()
        norms = filters.norms(quad_weight)
        peak = float(norms.max()) if norms.size else 0.0
        if peak == 0.0:
            return 1

        by_lag = np.zeros(filters.M + 1)
        for k, norm in zip(filters.lags, norms):
            by_lag[abs(int(k))] = max(by_lag[abs(int(k))], norm)

        cutoff = settings.FILTER_NEGLIGIBLE * peak
        for M in range(1, filters.M + 1):
            if np.all(by_lag[M + 1:] <= cutoff):
                return M
        return max(1, filters.M)

    @staticmethod
    def estimate_filters(
        B: TransferEstimate,
        fgrid: FrequencyGrid,
        grid: SpatialGrid,
        M: Optional[Union[int, str]] = "auto",
        K_max: Optional[int] = None
    ) -> FilterSet:
        """Filtros de prueba en |k| <= K_max, luego recorte a M (fijo o automático)"""
        settings = get_settings()
        K_max = settings.K_MAX if K_max is None else K_max
        if M not in (None, "auto"):
            K_max = max(K_max, int(M))
        trial = RegressionService.filters_from_transfer(B, fgrid, K_max)
        chosen = RegressionService.choose_M(trial, grid.quad_weight) if M in (None, "auto") else int(M)
        logger.info(f"✅ Filtros estimados ({B.method.value}, param={B.param:.3e}, M={chosen})")
        return trial.trimmed(chosen)
