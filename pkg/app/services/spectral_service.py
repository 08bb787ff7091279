"""
SpectralService - Densidades espectrales por Bartlett + suavizado local-lineal

Responsabilidades:
1. f̂^X_ω(x, y): suavizador de superficie agrupado sobre lags |h| < L
2. f̂^{ZX}_ω(x): suavizador de línea con solución explícita S_r / Q_r
3. Inversión a autocovarianzas R̂_h
4. Descomposición armónica por frecuencia

Principios:
- PRECÁLCULO: Las ecuaciones normales no dependen de ω; por frecuencia
  sólo se multiplican momentos por exponenciales
- SIMETRÍA EXACTA: Se calcula la mitad ω <= 0 y el resto es el conjugado
"""

from typing import Dict, Optional, Tuple
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigException,
    DataException,
    ImagResidueException,
    InsufficientDataException,
)
from app.core.kernels import intercept_weights
from app.schemas.data import ScalarTS, SparseFTS
from app.schemas.grids import BartlettWeights, FrequencyGrid, SpatialGrid
from app.schemas.spectral import (
    AutocovSequence,
    CrossSpectralEstimate,
    EigenSystem,
    RawCovariances,
    SpectralDensityEstimate,
)
from app.services.smoothing_service import SmoothingService

logger = logging.getLogger(__name__)


class SpectralService:
    """
    Service para estimación espectral

    Todas las matrices por frecuencia se guardan en la grilla completa
    (n_freq, ...), con values[-ω] = conj(values[ω]) exacto.
    """

    # ==================== HELPERS ====================

    @staticmethod
    def check_span(fgrid: FrequencyGrid, L: int) -> None:
        if fgrid.n_freq <= 2 * L:
            raise ConfigException(
                message=f"n_freq={fgrid.n_freq} debe ser mayor que 2L={2 * L}",
                details={"n_freq": fgrid.n_freq, "L": L}
            )

    @staticmethod
    def mirror(half: np.ndarray, fgrid: FrequencyGrid) -> np.ndarray:
        """Completar la grilla desde las frecuencias ω <= 0 por conjugación"""
        n = fgrid.n_freq
        n_half = half.shape[0]
        full = np.empty((n,) + half.shape[1:], dtype=complex)
        full[:n_half] = half
        for m in range(n_half, n):
            full[m] = np.conj(full[n - m])
        # ω = -π y ω = 0 son sus propios espejos
        full[0] = full[0].real
        if n % 2 == 0:
            full[n // 2] = full[n // 2].real
        return full

    @staticmethod
    def hermitian(values: np.ndarray) -> np.ndarray:
        return 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))

    @staticmethod
    def clip_negative(values: np.ndarray) -> np.ndarray:
        """Recortar autovalores negativos por frecuencia"""
        eigvals, eigvecs = np.linalg.eigh(values)
        negative = int(np.sum(eigvals < 0))
        if negative:
            logger.debug(f"⚠️ {negative} autovalores negativos recortados a 0")
        clipped = np.einsum("...ij,...j,...kj->...ik", eigvecs, np.maximum(eigvals, 0.0), np.conj(eigvecs))
        return SpectralService.hermitian(clipped)

    @staticmethod
    def lag_normalizers(counts: np.ndarray, L: int) -> Dict[int, float]:
        """
        𝒩_h = (T - |h|) N̄² para h ≠ 0 y 𝒩_0 = T (N²‾ - N̄)

        Raises:
            InsufficientDataException si 𝒩_0 = 0
        """
        T = counts.size
        mean = float(np.mean(counts))
        mean_sq = float(np.mean(counts.astype(float) ** 2))
        normalizers = {0: T * (mean_sq - mean)}
        if normalizers[0] <= 0:
            raise InsufficientDataException(
                message="𝒩_0 = 0: ninguna curva tiene dos o más observaciones",
                details={"T": T}
            )
        for h in range(1, L):
            normalizers[h] = normalizers[-h] = (T - h) * mean ** 2
        return normalizers

    # ==================== DENSIDAD ESPECTRAL ====================

    @staticmethod
    def lag_surface_systems(
        raw: RawCovariances,
        grid: SpatialGrid,
        L: int,
        B_R: float,
        weights: Dict[int, float]
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Sistema agrupado independiente de la frecuencia

        Returns:
            (lags, A (p, p, 3, 3) = Σ_h a_h N_h, m (H, p, p, 3) momentos por lag)
        """
        data = raw.data
        basis = SmoothingService.kernel_basis(data.x, grid.points, B_R, 2)
        plain = SmoothingService.per_time(data, basis)
        weighted = SmoothingService.per_time(data, basis, data.y)
        y2 = data.y * data.y

        lags = np.arange(-(L - 1), L)
        A = np.zeros((grid.p, grid.p, 3, 3))
        moments = np.empty((lags.size, grid.p, grid.p, 3))

        for index, h in enumerate(lags):
            h = int(h)

            def moment(r: int, s: int, with_g: bool) -> np.ndarray:
                if with_g:
                    total = SmoothingService.lag_moment(weighted[r], weighted[s], h)
                    if h == 0:
                        total = total - (basis[r] * y2[:, None]).T @ basis[s]
                    return total
                total = SmoothingService.lag_moment(plain[r], plain[s], h)
                if h == 0:
                    total = total - basis[r].T @ basis[s]
                return total

            normal, rhs = SmoothingService.surface_system(moment)
            A += weights[h] * normal
            moments[index] = rhs

        return lags, A, moments

    @staticmethod
    def estimate_spectral_density(
        raw: RawCovariances,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        B_R: float,
        counts: Optional[np.ndarray] = None,
        clip: bool = True
    ) -> SpectralDensityEstimate:
        """
        f̂^X_ω = (L/2π) ĉ_0 del ajuste agrupado con pesos W_h / 𝒩_h

        Para cada ω: A c = Σ_h a_h m_h e^{-ihω}, con A y m_h calculados una
        sola vez. Luego proyección hermítica y (si clip) recorte de
        autovalores negativos.
        """
        SpectralService.check_span(fgrid, L)
        if B_R <= 0:
            raise ConfigException(message="B_R debe ser positivo", details={"B_R": B_R})

        settings = get_settings()
        counts = raw.data.counts if counts is None else np.asarray(counts)
        normalizers = SpectralService.lag_normalizers(counts, L)
        bartlett = BartlettWeights(L=L)
        weights = {h: bartlett.weight(h) / normalizers[h] for h in range(-(L - 1), L)}

        logger.info(f"🔄 Estimando densidad espectral (L={L}, B_R={B_R:.4f}, p={grid.p})")
        lags, A, moments = SpectralService.lag_surface_systems(raw, grid, L, B_R, weights)

        e, order = intercept_weights(A, settings.SINGULAR_COND)
        SmoothingService.check_solved(order, grid.points, "estimate_spectral_density")

        coefficients = np.array([weights[int(h)] for h in lags])[:, None, None] * np.einsum("xyd,hxyd->hxy", e, moments)
        exps = fgrid.exponentials(lags)[:, fgrid.half_indices]
        half = (L / (2.0 * np.pi)) * np.einsum("hxy,hm->mxy", coefficients, exps)
        half = SpectralService.hermitian(half)
        if clip:
            half = SpectralService.clip_negative(half)

        values = SpectralService.mirror(half, fgrid)
        logger.info(f"✅ Densidad espectral estimada en {fgrid.n_freq} frecuencias")
        return SpectralDensityEstimate(values=values, L=L, bandwidth=B_R, grid=grid, fgrid=fgrid)

    # ==================== DENSIDAD CRUZADA ====================

    @staticmethod
    def cross_moments(
        dataX: SparseFTS,
        dataZ: ScalarTS,
        points: np.ndarray,
        L: int,
        bandwidth: float
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        S_r = Σ_h a_h S'_r(h) y momentos Q'_r(h) por lag, con a_h = W_h / T

        S'_r(h) suma K d^r sobre pares (Z_{t+h}, Y_tk) con Z_{t+h} observado;
        Q'_r(h) suma K d^r Z_{t+h} Y_tk.

        Returns:
            (lags, S (3, np), Q (H, 2, np) ya multiplicados por a_h)
        """
        T = dataX.T
        basis = SmoothingService.kernel_basis(dataX.x, points, bandwidth, 2)
        plain = SmoothingService.per_time(dataX, basis)
        weighted = SmoothingService.per_time(dataX, basis[:2], dataX.y)
        observed = dataZ.observed.astype(float)[:, None]
        z = dataZ.filled(0.0)[:, None]

        bartlett = BartlettWeights(L=L)
        lags = np.arange(-(L - 1), L)
        S = np.zeros((3, points.size))
        Q = np.empty((lags.size, 2, points.size))
        for index, h in enumerate(lags):
            a_h = bartlett.weight(int(h)) / T
            for r in range(3):
                S[r] += a_h * SmoothingService.lag_moment(observed, plain[r], int(h))[0]
            for r in range(2):
                Q[index, r] = a_h * SmoothingService.lag_moment(z, weighted[r], int(h))[0]
        return lags, S, Q

    @staticmethod
    def estimate_cross_spectral(
        dataX: SparseFTS,
        dataZ: ScalarTS,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        B_C: float
    ) -> CrossSpectralEstimate:
        """
        f̂^{ZX}_ω = (L/2π)(Q_0 S_2 - Q_1 S_1)/(S_0 S_2 - S_1²)

        Denominador <= 1e-12 en un punto: se ensancha la ventana ×1.5 hasta
        tres veces; si sigue degenerado el punto queda en NaN.
        """
        SpectralService.check_span(fgrid, L)
        if B_C <= 0:
            raise ConfigException(message="B_C debe ser positivo", details={"B_C": B_C})
        if dataZ.T != dataX.T:
            raise DataException(
                message=f"La respuesta tiene T={dataZ.T} y el regresor T={dataX.T}",
                details={"T_Z": dataZ.T, "T_X": dataX.T}
            )

        half_idx = fgrid.half_indices
        half = np.full((half_idx.size, grid.p), np.nan, dtype=complex)
        pending = np.arange(grid.p)
        bandwidth = B_C

        for attempt in range(4):
            points = grid.points[pending]
            lags, S, Q = SpectralService.cross_moments(dataX, dataZ, points, L, bandwidth)
            denominator = S[0] * S[2] - S[1] ** 2
            ok = denominator > 1e-12

            exps = fgrid.exponentials(lags)[:, half_idx]
            Q0 = exps.T @ Q[:, 0, ok]
            Q1 = exps.T @ Q[:, 1, ok]
            ratio = (Q0 * S[2, ok] - Q1 * S[1, ok]) / denominator[ok]
            half[:, pending[ok]] = (L / (2.0 * np.pi)) * ratio

            pending = pending[~ok]
            if pending.size == 0:
                break
            if attempt < 3:
                bandwidth *= 1.5
                logger.warning(f"🔄 Denominador degenerado en {pending.size} puntos, B_C → {bandwidth:.4f}")

        if pending.size:
            logger.warning(f"⚠️ Densidad cruzada NaN en {pending.size} puntos de la grilla")

        values = SpectralService.mirror(half, fgrid)
        logger.info(f"✅ Densidad espectral cruzada estimada (B_C={B_C:.4f})")
        return CrossSpectralEstimate(values=values, L=L, bandwidth=B_C)

    # ==================== INVERSIÓN ====================

    @staticmethod
    def invert_to_autocov(F: SpectralDensityEstimate, fgrid: FrequencyGrid) -> AutocovSequence:
        """
        R̂_h = ∫ F̂_ω e^{ihω} dω (suma de Riemann) para 0 <= h < L

        Raises:
            ImagResidueException si la parte imaginaria supera IMAG_TOL
        """
        SpectralService.check_span(fgrid, F.L)
        settings = get_settings()
        lags = np.arange(0, F.L)
        exps = fgrid.exponentials(-lags)
        R = fgrid.step * np.einsum("mxy,hm->hxy", F.values, exps)

        residue = float(np.max(np.abs(R.imag)))
        if residue > settings.IMAG_TOL:
            raise ImagResidueException(what="invert_to_autocov", residue=residue, tolerance=settings.IMAG_TOL)

        R = R.real
        R[0] = 0.5 * (R[0] + R[0].T)
        return AutocovSequence.from_nonnegative(R)

    # ==================== AUTODESCOMPOSICIÓN ====================

    @staticmethod
    def eigendecompose(
        F: SpectralDensityEstimate,
        grid: SpatialGrid,
        clip: bool = True,
        values: Optional[np.ndarray] = None
    ) -> EigenSystem:
        """
        Autodescomposición del operador w·F̂_ω en cada frecuencia

        φ = U/√w queda ortonormal en L²; autovalores descendentes y
        recortados en 0 (si clip).

        Args:
            values: Matrices hermíticas alternativas (n_freq, p, p); por
                defecto F.values
        """
        values = F.values if values is None else values
        return SpectralService.eigendecompose_values(values, grid, F.fgrid, clip)

    @staticmethod
    def eigendecompose_values(
        values: np.ndarray,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        clip: bool = True
    ) -> EigenSystem:
        w = grid.quad_weight
        n = fgrid.n_freq
        half_idx = fgrid.half_indices
        p = values.shape[-1]

        eigvals = np.empty((n, p))
        eigvecs = np.empty((n, p, p), dtype=complex)
        for m in half_idx:
            matrix = w * values[m]
            if m == 0 or 2 * m == n:
                lam, vec = np.linalg.eigh(matrix.real)
            else:
                lam, vec = np.linalg.eigh(matrix)
            eigvals[m] = lam[::-1]
            eigvecs[m] = vec[:, ::-1] / np.sqrt(w)

        for m in range(half_idx.size, n):
            eigvals[m] = eigvals[n - m]
            eigvecs[m] = np.conj(eigvecs[n - m])

        if clip:
            eigvals = np.maximum(eigvals, 0.0)

        return EigenSystem(eigenvalues=eigvals, eigenvectors=eigvecs)
