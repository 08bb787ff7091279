"""
SmoothingService - Suavizadores local-polinomiales del lag 0

Responsabilidades:
1. Generar las covarianzas crudas por lag
2. Superficie local-lineal R̂_0 (kernel producto de Epanechnikov)
3. Diagonal sin ruido R̄ (local-cuadrático perpendicular a la diagonal)
4. Diagonal con ruido V̂ y media μ̂ (local-lineal en una dimensión)
5. Varianza del error de medición σ̂²

Principios:
- SEPARABLE: Las sumas sobre pares se escriben como productos de sumas
  por tiempo, nunca se recorren los pares uno a uno
- FALLBACK: cuadrático → lineal → constante → error con el punto exacto
"""

from typing import Callable, List, Tuple
import logging
import warnings

import numpy as np
from scipy.special import comb

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigException,
    EmptyLagWarning,
    InsufficientDataException,
    SingularFitException,
)
from app.core.kernels import epanechnikov, intercept_weights, local_polynomial_line
from app.schemas.data import SparseFTS
from app.schemas.grids import NoiseEstimate, SpatialGrid
from app.schemas.spectral import CovSurfaceEstimate, RawCovariances

logger = logging.getLogger(__name__)

# Diseño local-lineal de superficie: (potencia en x, potencia en y)
SURFACE_DESIGN = ((0, 0), (1, 0), (0, 1))


class SmoothingService:
    """
    Service para los suavizadores de covarianza

    Convención: d_j(x) = (x_j - x) / B. Los interceptos no dependen del
    signo ni de la escala de las columnas de pendiente.
    """

    # ==================== CRUDOS ====================

    @staticmethod
    def raw_covariances(data: SparseFTS, L: int) -> RawCovariances:
        """
        Covarianzas crudas para |h| <= L

        Raises:
            ConfigException: si L >= T
        """
        if L >= data.T:
            raise ConfigException(
                message=f"El span L={L} debe ser menor que T={data.T}",
                details={"L": L, "T": data.T}
            )

        raw = RawCovariances(data=data, L=L)
        for h in range(0, L + 1):
            if raw.pair_count(h) == 0:
                logger.warning(f"⚠️ Lag {h} sin pares de productos")
                warnings.warn(f"el lag {h} no tiene pares de productos crudos", EmptyLagWarning)

        logger.info(f"✅ Covarianzas crudas: T={data.T}, n={data.n_obs}, L={L}")
        return raw

    # ==================== BLOQUES SEPARABLES ====================

    @staticmethod
    def kernel_basis(
        locations: np.ndarray,
        points: np.ndarray,
        bandwidth: float,
        degree: int
    ) -> List[np.ndarray]:
        """
        Φ_r[j, x] = K(d_j(x)) d_j(x)^r para r = 0..degree

        Returns:
            Lista de arrays (n, p)
        """
        scaled = (np.asarray(locations)[:, None] - points[None, :]) / bandwidth
        basis = [epanechnikov(scaled)]
        for _ in range(degree):
            basis.append(basis[-1] * scaled)
        return basis

    @staticmethod
    def per_time(data: SparseFTS, basis: List[np.ndarray], weights: np.ndarray = None) -> List[np.ndarray]:
        """Sumas por tiempo Σ_j w_j Φ_r[j, ·] → arrays (T, p)"""
        indicator = data.time_indicator()
        if weights is None:
            return [np.asarray(indicator @ phi) for phi in basis]
        return [np.asarray(indicator @ (weights[:, None] * phi)) for phi in basis]

    @staticmethod
    def lag_moment(left: np.ndarray, right: np.ndarray, h: int) -> np.ndarray:
        """
        M(x, y) = Σ_t left[t+h](x) right[t](y)

        Args:
            left, right: Arrays por tiempo (T, p)
        """
        T = left.shape[0]
        if abs(h) >= T:
            return np.zeros((left.shape[1], right.shape[1]))
        if h >= 0:
            return left[h:].T @ right[:T - h]
        return left[:T + h].T @ right[-h:]

    @staticmethod
    def surface_system(moment: Callable[[int, int, bool], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Ecuaciones normales 3x3 del ajuste local-lineal de superficie

        Args:
            moment: moment(r, s, weighted) → Σ K K d_u^r d_v^s [· g si weighted]

        Returns:
            (normal (p, p, 3, 3), rhs (p, p, 3))
        """
        cache = {}

        def get(r: int, s: int, weighted: bool) -> np.ndarray:
            key = (r, s, weighted)
            if key not in cache:
                cache[key] = moment(r, s, weighted)
            return cache[key]

        first = get(0, 0, False)
        normal = np.empty(first.shape + (3, 3))
        rhs = np.empty(first.shape + (3,))
        for i, (ri, si) in enumerate(SURFACE_DESIGN):
            rhs[..., i] = get(ri, si, True)
            for j, (rj, sj) in enumerate(SURFACE_DESIGN):
                normal[..., i, j] = get(ri + rj, si + sj, False)
        return normal, rhs

    @staticmethod
    def check_solved(order: np.ndarray, points: np.ndarray, estimator: str) -> None:
        """SingularFitException en el primer punto sin ajuste posible"""
        failed = np.argwhere(order == 0)
        if failed.size:
            index = tuple(int(i) for i in failed[0])
            point = tuple(round(float(points[i]), 6) for i in index)
            logger.error(f"❌ Ajuste singular en {estimator} en {point}")
            raise SingularFitException(estimator=estimator, point=point)

    # ==================== SUPERFICIE LAG 0 ====================

    @staticmethod
    def smooth_lag0_surface(raw: RawCovariances, grid: SpatialGrid, B_R: float) -> CovSurfaceEstimate:
        """
        Superficie local-lineal de R̂_0 en la grilla

        Minimiza Σ_t Σ_{j≠k} K K (G_{0,t} - c0 - c1 d_j - c2 d_k)^2 en cada
        (x, y). Los pares (j, k) y (k, j) entran ambos.
        """
        if B_R <= 0:
            raise ConfigException(message="B_R debe ser positivo", details={"B_R": B_R})
        if raw.pair_count(0) == 0:
            raise InsufficientDataException(
                message="No hay pares de lag 0 (todas las curvas con N_t <= 1)",
                details={"T": raw.data.T}
            )

        settings = get_settings()
        data = raw.data
        basis = SmoothingService.kernel_basis(data.x, grid.points, B_R, 2)
        plain = SmoothingService.per_time(data, basis)
        weighted = SmoothingService.per_time(data, basis, data.y)
        y2 = data.y * data.y

        def moment(r: int, s: int, with_g: bool) -> np.ndarray:
            if with_g:
                total = weighted[r].T @ weighted[s]
                return total - (basis[r] * y2[:, None]).T @ basis[s]
            return plain[r].T @ plain[s] - basis[r].T @ basis[s]

        normal, rhs = SmoothingService.surface_system(moment)
        e, order = intercept_weights(normal, settings.SINGULAR_COND)
        SmoothingService.check_solved(order, grid.points, "smooth_lag0_surface")

        values = np.einsum("xyd,xyd->xy", e, rhs)
        values = 0.5 * (values + values.T)

        logger.info(f"✅ Superficie lag 0 suavizada (B_R={B_R:.4f})")
        return CovSurfaceEstimate(values=values, bandwidth=B_R)

    # ==================== DIAGONALES ====================

    @staticmethod
    def perpendicular_distance(xj: float, xk: float) -> float:
        """
        Distancia con signo de (xj, xk) a la diagonal

        Positiva sobre la diagonal (xk > xj), negativa debajo.
        """
        P = 0.5 * (xj + xk)
        return float(np.sign(xk - xj) * np.sqrt((P - xj) ** 2 + (P - xk) ** 2))

    @staticmethod
    def smooth_diagonal_perpendicular(raw: RawCovariances, grid: SpatialGrid, B_R: float) -> np.ndarray:
        """
        R̄(x): intercepto del ajuste local-cuadrático en Δ(x_j, x_k)

        Pesos K(d_j(x)) K(d_k(x)). Como Δ = B (d_k - d_j)/√2, las potencias de
        Δ se expanden en momentos separables de d_j y d_k.

        Returns:
            Vector (p,)
        """
        if raw.pair_count(0) == 0:
            raise InsufficientDataException(
                message="No hay pares de lag 0 para la diagonal",
                details={"T": raw.data.T}
            )

        settings = get_settings()
        data = raw.data
        basis = SmoothingService.kernel_basis(data.x, grid.points, B_R, 4)
        plain = SmoothingService.per_time(data, basis)
        weighted = SmoothingService.per_time(data, basis, data.y)
        y2 = data.y * data.y

        def pair_moment(a: int, b: int, with_g: bool) -> np.ndarray:
            # Σ_t Σ_{j≠k} K_j K_k d_j^a d_k^b [Y_j Y_k], evaluado en (x, x)
            if with_g:
                total = np.sum(weighted[a] * weighted[b], axis=0)
                return total - np.sum(basis[a] * basis[b] * y2[:, None], axis=0)
            return np.sum(plain[a] * plain[b], axis=0) - np.sum(basis[a] * basis[b], axis=0)

        def delta_moment(r: int, with_g: bool) -> np.ndarray:
            # Σ K K δ^r con δ = (d_k - d_j)/√2
            total = np.zeros(grid.p)
            for i in range(r + 1):
                coef = comb(r, i, exact=True) * (-1) ** (r - i)
                total = total + coef * pair_moment(r - i, i, with_g)
            return total / 2.0 ** (r / 2.0)

        S = [delta_moment(r, False) for r in range(5)]
        normal = np.empty((grid.p, 3, 3))
        rhs = np.empty((grid.p, 3))
        for i in range(3):
            rhs[:, i] = delta_moment(i, True)
            for j in range(3):
                normal[:, i, j] = S[i + j]

        e, order = intercept_weights(normal, settings.SINGULAR_COND)
        SmoothingService.check_solved(order, grid.points, "smooth_diagonal_perpendicular")

        logger.info(f"✅ Diagonal perpendicular suavizada (B_R={B_R:.4f})")
        return np.einsum("xd,xd->x", e, rhs)

    @staticmethod
    def smooth_noisy_diagonal(data: SparseFTS, grid: SpatialGrid, B_V: float) -> np.ndarray:
        """V̂(x): ajuste local-lineal de Y_tj^2 contra x_tj"""
        if B_V <= 0:
            raise ConfigException(message="B_V debe ser positivo", details={"B_V": B_V})

        settings = get_settings()
        values, order = local_polynomial_line(
            data.x, data.y ** 2, grid.points, B_V, 1, settings.SINGULAR_COND
        )
        SmoothingService.check_solved(order, grid.points, "smooth_noisy_diagonal")
        logger.info(f"✅ Diagonal con ruido suavizada (B_V={B_V:.4f})")
        return values

    @staticmethod
    def smooth_mean(data: SparseFTS, grid: SpatialGrid, bandwidth: float) -> np.ndarray:
        """μ̂(x): ajuste local-lineal de Y_tj contra x_tj"""
        settings = get_settings()
        values, order = local_polynomial_line(
            data.x, data.y, grid.points, bandwidth, 1, settings.SINGULAR_COND
        )
        SmoothingService.check_solved(order, grid.points, "smooth_mean")
        return values

    # ==================== RUIDO ====================

    @staticmethod
    def estimate_sigma2(V: np.ndarray, Rbar: np.ndarray, grid: SpatialGrid) -> NoiseEstimate:
        """
        σ̂² = ∫ (V̂ - R̄)

        Si la integral no es positiva se reemplaza por
        SIGMA2_FLOOR · max(1, ∫ V̂).
        """
        settings = get_settings()
        sigma2 = float(grid.quad_weight * np.sum(V - Rbar))
        if sigma2 <= 0:
            floor = settings.SIGMA2_FLOOR * max(1.0, float(grid.quad_weight * np.sum(V)))
            logger.warning(f"⚠️ σ² estimado no positivo ({sigma2:.3e}), usando piso {floor:.3e}")
            sigma2 = floor
        return NoiseEstimate(sigma2=sigma2)
