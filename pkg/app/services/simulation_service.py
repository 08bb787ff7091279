"""
SimulationService - Generadores y métricas del estudio de simulación

Responsabilidades:
1. Kernel de innovaciones de 10 términos y su factorización exacta
2. FAR(1) y FMA(4) en la grilla con autocovarianzas verdaderas
3. Muestreo disperso con ruido (SNR fijo) y respuesta escalar
4. Métricas δ^B y δ^pred

Principios:
- DETERMINISMO: toda la aleatoriedad sale de la semilla vía
  SeedSequence([seed, copia, subsistema])
- EXACTITUD: las innovaciones se generan desde la factorización del
  kernel, no desde una Cholesky numérica
"""

from typing import Optional, Tuple, Union
import logging

import numpy as np

from app.core.exceptions import EmptyDataException, NonConvergenceException
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.grids import SpatialGrid
from app.schemas.regression import FilterSet
from app.schemas.simulation import (
    FilterShape,
    GroundTruth,
    ProcessType,
    RegressionScheme,
    SimConfig,
)
from app.schemas.spectral import AutocovSequence

logger = logging.getLogger(__name__)

# ==================== CONSTANTES DEL DISEÑO ====================

INNOVATION_COEFFICIENTS = (1.0, 0.6, 0.3, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05)
FAR_NORM = 0.7
FMA_NORMS = (0.8, 0.6, 0.4, 0.2)
SCHEME_WEIGHTS = {
    RegressionScheme.REG1: {0: 1.0, 1: 1.0},
    RegressionScheme.REG2: {0: 1.0, 3: 1.0},
    RegressionScheme.REG3: {0: 1.0, 1: 0.9, 2: 0.7, 3: 0.5, 4: 0.3, 5: 0.1},
}
BURN_IN = 100
H_TRUE = 30
LYAPUNOV_TOL = 1e-10
LYAPUNOV_MAX_ITER = 10_000

# Subsistemas para la derivación de semillas
STREAM_LATENT = 0
STREAM_SAMPLING = 1
STREAM_RESPONSE = 2
STREAM_FOLDS = 3
STREAM_HOLDOUT = 4


class SimulationService:
    """Service para los generadores del estudio de simulación"""

    # ==================== SEMILLAS ====================

    @staticmethod
    def rng(seed: int, stream: int, copy: int = 0) -> np.random.Generator:
        """Generador independiente por (semilla, copia, subsistema)"""
        return np.random.default_rng(np.random.SeedSequence([seed, copy, stream]))

    # ==================== KERNELS ====================

    @staticmethod
    def innovation_basis(grid: SpatialGrid) -> np.ndarray:
        """
        Filas √c_i f_i(x) con f = sin(2πx), cos(2πx), sin(4πx), ...

        K = basis^T basis reproduce el kernel de innovaciones exactamente.
        """
        x = grid.points
        rows = []
        for i, coef in enumerate(INNOVATION_COEFFICIENTS):
            frequency = 2.0 * np.pi * (i // 2 + 1)
            wave = np.sin(frequency * x) if i % 2 == 0 else np.cos(frequency * x)
            rows.append(np.sqrt(coef) * wave)
        return np.array(rows)

    @staticmethod
    def innovation_kernel(grid: SpatialGrid) -> np.ndarray:
        """K(x, y) = Σ c_i f_i(x) f_i(y) en la grilla"""
        basis = SimulationService.innovation_basis(grid)
        return basis.T @ basis

    @staticmethod
    def scaled_operator(kernel: np.ndarray, grid: SpatialGrid, norm: float) -> Tuple[np.ndarray, float]:
        """
        Operador w·κ·kernel con norma espectral `norm`

        Returns:
            (matriz del operador, κ)
        """
        base = grid.quad_weight * kernel
        kappa = norm / float(np.linalg.norm(base, 2))
        return kappa * base, kappa

    @staticmethod
    def far_operator(grid: SpatialGrid, norm: float = FAR_NORM) -> Tuple[np.ndarray, float]:
        """A(x, y) = κ sin(x - y) discretizado"""
        x = grid.points
        return SimulationService.scaled_operator(np.sin(x[:, None] - x[None, :]), grid, norm)

    @staticmethod
    def fma_operators(grid: SpatialGrid, norms=FMA_NORMS) -> np.ndarray:
        """M_1..M_4 con kernels sin(x+y), sin(1-x+y), sin(1+x-y), sin(2-x-y)"""
        x, y = grid.points[:, None], grid.points[None, :]
        kernels = (np.sin(x + y), np.sin(1 - x + y), np.sin(1 + x - y), np.sin(2 - x - y))
        return np.array([
            SimulationService.scaled_operator(kernel, grid, norm)[0]
            for kernel, norm in zip(kernels, norms)
        ])

    # ==================== AUTOCOVARIANZAS VERDADERAS ====================

    @staticmethod
    def lyapunov(A: np.ndarray, K: np.ndarray) -> np.ndarray:
        """
        R_0 = A R_0 A^T + K por iteración de punto fijo

        Raises:
            NonConvergenceException si no converge en LYAPUNOV_MAX_ITER pasos
        """
        R0 = K.copy()
        for iteration in range(LYAPUNOV_MAX_ITER):
            updated = A @ R0 @ A.T + K
            change = float(np.max(np.abs(updated - R0)))
            R0 = updated
            if change <= LYAPUNOV_TOL * max(1.0, float(np.max(np.abs(R0)))):
                logger.debug(f"Lyapunov convergió en {iteration + 1} iteraciones")
                return 0.5 * (R0 + R0.T)
        raise NonConvergenceException(
            message="La iteración de Lyapunov no convergió",
            details={"iterations": LYAPUNOV_MAX_ITER}
        )

    @staticmethod
    def far_autocov(A: np.ndarray, K: np.ndarray, max_lag: int = H_TRUE) -> AutocovSequence:
        """R_h = A^h R_0 para h >= 0"""
        R = [SimulationService.lyapunov(A, K)]
        for _ in range(max_lag):
            R.append(A @ R[-1])
        return AutocovSequence.from_nonnegative(np.array(R))

    @staticmethod
    def fma_autocov(operators: np.ndarray, K: np.ndarray) -> AutocovSequence:
        """R_h = Σ_i M_{i+h} K M_i^T con M_0 = I, h = 0..4"""
        p = K.shape[0]
        full = np.concatenate([np.eye(p)[None], operators], axis=0)
        order = full.shape[0] - 1
        R = []
        for h in range(order + 1):
            total = np.zeros((p, p))
            for i in range(order + 1 - h):
                total += full[i + h] @ K @ full[i].T
            R.append(total)
        R[0] = 0.5 * (R[0] + R[0].T)
        return AutocovSequence.from_nonnegative(np.array(R))

    # ==================== PROCESOS ====================

    @staticmethod
    def draw_innovations(grid: SpatialGrid, count: int, rng: np.random.Generator) -> np.ndarray:
        basis = SimulationService.innovation_basis(grid)
        return rng.standard_normal((count, basis.shape[0])) @ basis

    @staticmethod
    def simulate_far1(
        cfg: SimConfig,
        grid: SpatialGrid,
        presample: int = 0,
        copy: int = 0,
        A: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, AutocovSequence]:
        """
        X_{t+1} = A X_t + E_t con burn-in de BURN_IN pasos

        Returns:
            (curvas (presample + T, p), R verdaderos para |h| <= H_TRUE)
        """
        K = SimulationService.innovation_kernel(grid)
        if A is None:
            A, kappa = SimulationService.far_operator(grid)
            logger.debug(f"FAR(1): κ = {kappa:.6f}")

        total = BURN_IN + presample + cfg.T
        rng = SimulationService.rng(cfg.seed, STREAM_LATENT, copy)
        innovations = SimulationService.draw_innovations(grid, total, rng)
        curves = np.empty((total, grid.p))
        state = np.zeros(grid.p)
        for t in range(total):
            state = A @ state + innovations[t]
            curves[t] = state

        return curves[BURN_IN:], SimulationService.far_autocov(A, K)

    @staticmethod
    def simulate_fma4(
        cfg: SimConfig,
        grid: SpatialGrid,
        presample: int = 0,
        copy: int = 0,
        operators: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, AutocovSequence]:
        """X_t = E_t + Σ_{i=1..4} M_i E_{t-i}"""
        K = SimulationService.innovation_kernel(grid)
        if operators is None:
            operators = SimulationService.fma_operators(grid)
        order = operators.shape[0]

        total = presample + cfg.T
        rng = SimulationService.rng(cfg.seed, STREAM_LATENT, copy)
        innovations = SimulationService.draw_innovations(grid, order + total, rng)
        curves = innovations[order:].copy()
        for i in range(1, order + 1):
            curves += innovations[order - i:order - i + total] @ operators[i - 1].T

        return curves, SimulationService.fma_autocov(operators, K)

    # ==================== MUESTREO ====================

    @staticmethod
    def sparse_sample(
        curves: np.ndarray,
        cfg: SimConfig,
        grid: SpatialGrid,
        sigma2: float,
        copy: int = 0
    ) -> SparseFTS:
        """
        N_t ~ U{0..N_max}, x_tj ~ U[0, 1], Y = X_t(x_tj) + N(0, σ²)

        Raises:
            EmptyDataException si no se generó ninguna observación
        """
        rng = SimulationService.rng(cfg.seed, STREAM_SAMPLING, copy)
        T = curves.shape[0]
        counts = rng.integers(0, cfg.N_max + 1, size=T)
        if counts.sum() == 0:
            raise EmptyDataException(
                message="El muestreo no produjo observaciones",
                details={"N_max": cfg.N_max, "T": T}
            )

        t = np.repeat(np.arange(1, T + 1), counts)
        x = rng.uniform(0.0, 1.0, size=t.size)
        y = np.empty(t.size)
        for time in np.unique(t):
            mask = t == time
            y[mask] = np.interp(x[mask], grid.points, curves[time - 1])
        y += rng.normal(0.0, np.sqrt(sigma2), size=t.size)
        return SparseFTS(T=T, t=t, x=x, y=y)

    # ==================== RESPUESTA ====================

    @staticmethod
    def filter_shape(shape: FilterShape, grid: SpatialGrid) -> np.ndarray:
        x = grid.points
        if FilterShape(shape) == FilterShape.A:
            return np.cos(4.0 * np.pi * x)
        return np.sin(2.0 * np.pi * x)

    @staticmethod
    def true_filters(cfg: SimConfig, grid: SpatialGrid) -> FilterSet:
        """b_k = peso_k · β para los lags del esquema"""
        beta = SimulationService.filter_shape(cfg.shape, grid)
        weights = SCHEME_WEIGHTS[RegressionScheme(cfg.scheme)]
        M = max(weights)
        return FilterSet.from_lags({k: w * beta for k, w in weights.items()}, M, grid.p)

    @staticmethod
    def build_response(
        curves: np.ndarray,
        first_time: int,
        filters: FilterSet,
        cfg: SimConfig,
        grid: SpatialGrid,
        copy: int = 0
    ) -> ScalarTS:
        """
        Z_t = Σ_k ⟨b_k, X_{t-k}⟩ + e_t, t = 1..T, e_t ~ N(0, τ²)

        Args:
            curves: X_t para t = first_time.. (debe cubrir t - M >= first_time)
        """
        rng = SimulationService.rng(cfg.seed, STREAM_RESPONSE, copy)
        T = cfg.T
        z = rng.normal(0.0, np.sqrt(cfg.tau2), size=T)
        for k in filters.lags:
            b = filters.at(int(k))
            if not np.any(b):
                continue
            start = 1 - int(k) - first_time
            z += grid.quad_weight * (curves[start:start + T] @ b)
        return ScalarTS(z=z)

    @staticmethod
    def response_variance(R: AutocovSequence, filters: FilterSet, tau2: float, grid: SpatialGrid) -> float:
        """var(Z_0) = Σ_{k,k'} w² b_k^T R_{k'-k} b_{k'} + τ²"""
        w = grid.quad_weight
        total = tau2
        for k in filters.lags:
            for kk in filters.lags:
                total += w * w * float(filters.at(int(k)) @ R.at(int(kk - k)) @ filters.at(int(kk)))
        return total

    # ==================== ESCENARIO COMPLETO ====================

    @staticmethod
    def simulate(
        cfg: SimConfig,
        grid: Optional[SpatialGrid] = None,
        copy: int = 0
    ) -> Tuple[Union[SparseFTS, DenseFTS], ScalarTS, GroundTruth]:
        """
        Generar regresor observado, respuesta y verdad de un escenario

        copy > 0 produce una copia independiente (semillas derivadas).
        """
        grid = grid or SpatialGrid(p=cfg.p)
        filters = SimulationService.true_filters(cfg, grid)
        presample = filters.M

        if ProcessType(cfg.process) == ProcessType.FAR1:
            curves, R = SimulationService.simulate_far1(cfg, grid, presample, copy)
        else:
            curves, R = SimulationService.simulate_fma4(cfg, grid, presample, copy)

        sigma2 = float(grid.quad_trace(R.at(0))) / cfg.snr
        z = SimulationService.build_response(curves, 1 - presample, filters, cfg, grid, copy)
        observed = curves[presample:]

        if cfg.dense:
            data = DenseFTS(curves=observed)
        else:
            data = SimulationService.sparse_sample(observed, cfg, grid, sigma2, copy)

        truth = GroundTruth(
            R=R,
            sigma2=sigma2,
            filters=filters,
            latent=curves,
            first_time=1 - presample,
            var_z=SimulationService.response_variance(R, filters, cfg.tau2, grid),
        )
        logger.info(
            f"✅ Simulado {cfg.process.value}/{cfg.scheme.value}/{cfg.shape.value} "
            f"T={cfg.T} N_max={cfg.N_max} seed={cfg.seed} copy={copy}"
        )
        return data, z, truth

    # ==================== MÉTRICAS ====================

    @staticmethod
    def metric_delta_B(estimate: FilterSet, truth: FilterSet, grid: SpatialGrid) -> float:
        """δ^B = Σ_k ‖b̂_k - b_k‖² sobre la unión de lags"""
        M = max(estimate.M, truth.M)
        diff = estimate.padded(M).values - truth.padded(M).values
        return float(grid.quad_weight * np.sum(diff ** 2))

    @staticmethod
    def metric_delta_pred(z_hat: np.ndarray, z: np.ndarray, var_z: float) -> float:
        """δ^pred = media de (Ẑ_t - Z_t)² / var(Z_0)"""
        z_hat = np.asarray(z_hat, dtype=float)
        z = np.asarray(z, dtype=float)
        return float(np.mean((z_hat - z) ** 2) / var_z)
