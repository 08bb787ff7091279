"""
JointModelService - Regresión con un regresor disperso y uno denso

Responsabilidades:
1. F̂12: cruce disperso-denso suavizado sólo en la coordenada dispersa
2. Estimador de Bartlett funcional para el regresor denso (F̂22, f̂^{Z2})
3. Transferencias conjuntas: truncada (matriz M) y Tikhonov (dos ρ)
4. Pronóstico con la serie densa rellenada por su media

Principios:
- Si F12 ≡ 0 todo se reduce al par de modelos marginales
- La matriz M singular no aborta: se descarta el menor autovalor incluido
  y se reintenta hasta (K1, K2) = (0, 0)
"""

from typing import Iterable, Optional, Tuple, Union
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigException,
    DataException,
    SingularFitException,
    SingularMException,
    SolveFailureException,
)
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.extensions import JointSpectralEstimate, JointTransferEstimate
from app.schemas.forecast import ForecastResult, PredictedCurves
from app.schemas.grids import BartlettWeights, FrequencyGrid, SpatialGrid
from app.schemas.regression import FilterSet, RegularizationMethod
from app.schemas.spectral import CrossSpectralEstimate, EigenSystem, SpectralDensityEstimate
from app.services.forecast_service import ForecastService
from app.services.regression_service import RegressionService
from app.services.smoothing_service import SmoothingService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

Counts = Union[int, np.ndarray]


class JointModelService:
    """Service para el modelo de dos regresores (disperso + denso)"""

    # ==================== DENSO ====================

    @staticmethod
    def dense_bartlett(
        dataX2: DenseFTS,
        dataZ: ScalarTS,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        clip: bool = True
    ) -> Tuple[SpectralDensityEstimate, CrossSpectralEstimate]:
        """
        F̂_ω = (1/2π) Σ_{|h|<L} W_h R̂_h e^{-ihω} con covarianzas empíricas

        Las curvas se centran con la media muestral. Con Z faltantes el
        cruce del lag h se reescala por (T - |h|)/n_h.
        """
        SpectralService.check_span(fgrid, L)
        if dataX2.p != grid.p:
            raise ConfigException(
                message=f"Las curvas densas tienen p={dataX2.p} y la grilla p={grid.p}",
                details={"p_curves": dataX2.p, "p_grid": grid.p}
            )
        if dataZ.T != dataX2.T:
            raise DataException(
                message=f"La respuesta tiene T={dataZ.T} y el regresor T={dataX2.T}",
                details={"T_Z": dataZ.T, "T_X": dataX2.T}
            )

        T = dataX2.T
        centered = dataX2.centered()
        z = dataZ.filled(0.0)[:, None]
        observed = dataZ.observed.astype(float)[:, None]
        bartlett = BartlettWeights(L=L)
        ones = np.ones((T, 1))

        lags = np.arange(-(L - 1), L)
        autocov = np.empty((lags.size, grid.p, grid.p))
        cross = np.zeros((lags.size, grid.p))
        for index, h in enumerate(lags):
            h = int(h)
            autocov[index] = bartlett.weight(h) * SmoothingService.lag_moment(centered, centered, h) / T
            pairs = float(SmoothingService.lag_moment(observed, ones, h)[0, 0])
            if pairs > 0:
                rescale = (T - abs(h)) / pairs
                cross[index] = bartlett.weight(h) * rescale * SmoothingService.lag_moment(z, centered, h)[0] / T

        exps = fgrid.exponentials(lags)[:, fgrid.half_indices]
        half = np.einsum("hxy,hm->mxy", autocov, exps) / (2.0 * np.pi)
        half = SpectralService.hermitian(half)
        if clip:
            half = SpectralService.clip_negative(half)
        half_cross = np.einsum("hx,hm->mx", cross, exps) / (2.0 * np.pi)

        F22 = SpectralDensityEstimate(
            values=SpectralService.mirror(half, fgrid), L=L, grid=grid, fgrid=fgrid
        )
        Fz2 = CrossSpectralEstimate(values=SpectralService.mirror(half_cross, fgrid), L=L)
        logger.info(f"✅ Bartlett funcional denso (T={T}, L={L})")
        return F22, Fz2

    # ==================== CRUCE DISPERSO-DENSO ====================

    @staticmethod
    def est_cross_sparse_dense(
        dataX1: SparseFTS,
        dataX2: DenseFTS,
        mu1: np.ndarray,
        mu2: np.ndarray,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        B_R: float
    ) -> np.ndarray:
        """
        F̂12_ω(x, y): ajuste local-lineal en x de
        (Y_{t+h,j} - μ̂1(x_{t+h,j}))(X2_t(y) - μ̂2(y)), agrupado en los lags

        Returns:
            Array complejo (n_freq, p, p)
        """
        SpectralService.check_span(fgrid, L)
        if B_R <= 0:
            raise ConfigException(message="B_R debe ser positivo", details={"B_R": B_R})
        if dataX1.T != dataX2.T:
            raise DataException(
                message=f"Los regresores tienen T={dataX1.T} y T={dataX2.T}",
                details={"T_1": dataX1.T, "T_2": dataX2.T}
            )

        T = dataX1.T
        sparse_c = dataX1.centered(mu1, grid)
        dense_c = dataX2.centered(mu2)
        basis = SmoothingService.kernel_basis(sparse_c.x, grid.points, B_R, 2)
        plain = SmoothingService.per_time(sparse_c, basis)
        weighted = SmoothingService.per_time(sparse_c, basis[:2], sparse_c.y)
        ones = np.ones((T, 1))
        bartlett = BartlettWeights(L=L)

        lags = np.arange(-(L - 1), L)
        S = np.zeros((3, grid.p))
        Q = np.empty((lags.size, 2, grid.p, grid.p))
        for index, h in enumerate(lags):
            a_h = bartlett.weight(int(h)) / T
            for r in range(3):
                S[r] += a_h * SmoothingService.lag_moment(plain[r], ones, int(h))[:, 0]
            for r in range(2):
                Q[index, r] = a_h * SmoothingService.lag_moment(weighted[r], dense_c, int(h))

        denominator = S[0] * S[2] - S[1] ** 2
        degenerate = np.flatnonzero(~(denominator > 1e-12))
        if degenerate.size:
            point = (round(float(grid.points[degenerate[0]]), 6),)
            logger.error(f"❌ Ajuste singular en est_cross_sparse_dense en {point}")
            raise SingularFitException(estimator="est_cross_sparse_dense", point=point)

        exps = fgrid.exponentials(lags)[:, fgrid.half_indices]
        Q0 = np.einsum("hm,hxy->mxy", exps, Q[:, 0])
        Q1 = np.einsum("hm,hxy->mxy", exps, Q[:, 1])
        half = (L / (2.0 * np.pi)) * (Q0 * S[2][:, None] - Q1 * S[1][:, None]) / denominator[:, None]

        logger.info(f"✅ Densidad cruzada disperso-densa estimada (B_R={B_R:.4f})")
        return SpectralService.mirror(half, fgrid)

    @staticmethod
    def estimate_joint(
        dataX1: SparseFTS,
        dataX2: DenseFTS,
        dataZ: ScalarTS,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        B_R: float,
        B_C: float,
        B_mu: Optional[float] = None,
        mu1: Optional[np.ndarray] = None,
        F11: Optional[SpectralDensityEstimate] = None,
        Fz1: Optional[CrossSpectralEstimate] = None,
        eig1: Optional[EigenSystem] = None
    ) -> JointSpectralEstimate:
        """
        Todas las piezas espectrales del modelo conjunto

        μ̂1 por suavizado local-lineal (ancho B_mu, por defecto B_C);
        μ̂2 media puntual. Z debe llegar centrada.

        Las piezas del regresor disperso (mu1, F11, Fz1, eig1) pueden llegar
        ya estimadas desde el ajuste marginal; sólo se calculan las faltantes.
        """
        if mu1 is None:
            mu1 = SmoothingService.smooth_mean(dataX1, grid, B_C if B_mu is None else B_mu)
        mu2 = dataX2.mean()
        sparse_c = dataX1.centered(mu1, grid)

        if F11 is None:
            raw = SmoothingService.raw_covariances(sparse_c, L)
            F11 = SpectralService.estimate_spectral_density(raw, grid, fgrid, L, B_R)
        if eig1 is None:
            eig1 = SpectralService.eigendecompose(F11, grid)
        if Fz1 is None:
            Fz1 = SpectralService.estimate_cross_spectral(sparse_c, dataZ, grid, fgrid, L, B_C)
        F22, Fz2 = JointModelService.dense_bartlett(dataX2, dataZ, grid, fgrid, L)
        F12 = JointModelService.est_cross_sparse_dense(dataX1, dataX2, mu1, mu2, grid, fgrid, L, B_R)

        return JointSpectralEstimate(
            F11=F11,
            F22=F22,
            F12=F12,
            Fz1=Fz1,
            Fz2=Fz2,
            eig1=eig1,
            eig2=SpectralService.eigendecompose(F22, grid),
            grid=grid,
            mu1=mu1,
            mu2=mu2,
        )

    # ==================== TRUNCACIÓN ====================

    @staticmethod
    def joint_thresholds(J: JointSpectralEstimate, upsilon1: float, upsilon2: float) -> Tuple[np.ndarray, np.ndarray]:
        """K1_ω = #{λ̂_j > υ1}, K2_ω = #{η̂_j > υ2}"""
        return (
            RegressionService.threshold_rank(J.eig1, upsilon1),
            RegressionService.threshold_rank(J.eig2, upsilon2),
        )

    @staticmethod
    def solve_M(lam: np.ndarray, eta: np.ndarray, gamma: np.ndarray, pairing: np.ndarray) -> np.ndarray:
        """
        d = c M con M = [[diag λ, γ], [γ^H, diag η]]^{-1}

        Raises:
            SingularMException si la matriz está mal condicionada
        """
        settings = get_settings()
        K1, K2 = lam.size, eta.size
        G = np.zeros((K1 + K2, K1 + K2), dtype=complex)
        G[:K1, :K1] = np.diag(lam)
        G[K1:, K1:] = np.diag(eta)
        G[:K1, K1:] = gamma
        G[K1:, :K1] = np.conj(gamma.T)
        try:
            if np.linalg.cond(G) > settings.SINGULAR_COND:
                raise np.linalg.LinAlgError("mal condicionada")
            return np.linalg.solve(G.T, pairing)
        except np.linalg.LinAlgError:
            raise SingularMException(
                message=f"Matriz M singular con (K1, K2) = ({K1}, {K2})",
                details={"K1": K1, "K2": K2}
            )

    @staticmethod
    def joint_truncation_transfer(
        J: JointSpectralEstimate,
        K1: Counts,
        K2: Counts
    ) -> JointTransferEstimate:
        """
        b1 = Σ_i d_i conj(φ_i), b2 = Σ_j d_{K1+j} conj(ψ_j) con
        d = [⟨f^{Z1}, φ_i⟩, ⟨f^{Z2}, ψ_j⟩] M

        Args:
            K1, K2: rangos por frecuencia (enteros o arrays (n_freq,))
        """
        grid = J.grid
        n = J.F11.fgrid.n_freq
        K1 = np.broadcast_to(np.asarray(K1, dtype=int), (n,))
        K2 = np.broadcast_to(np.asarray(K2, dtype=int), (n,))
        if np.any(K1 < 0) or np.any(K2 < 0) or np.any(K1 > grid.p) or np.any(K2 > grid.p):
            raise ConfigException(message="K1 y K2 deben estar en 0..p")

        gamma = J.gamma()
        pair1 = RegressionService.pairings(J.Fz1.values, J.eig1, grid)
        pair2 = RegressionService.pairings(J.Fz2.values, J.eig2, grid)
        phi_conj = np.conj(J.eig1.eigenvectors)
        psi_conj = np.conj(J.eig2.eigenvectors)

        half_idx = J.F11.fgrid.half_indices
        b1 = np.zeros((half_idx.size, grid.p), dtype=complex)
        b2 = np.zeros((half_idx.size, grid.p), dtype=complex)
        retries = 0
        for row, m in enumerate(half_idx):
            k1, k2 = int(K1[m]), int(K2[m])
            while k1 + k2 > 0:
                try:
                    d = JointModelService.solve_M(
                        J.eig1.eigenvalues[m, :k1],
                        J.eig2.eigenvalues[m, :k2],
                        gamma[m, :k1, :k2],
                        np.concatenate([pair1[m, :k1], pair2[m, :k2]]),
                    )
                except SingularMException:
                    retries += 1
                    # descartar el menor autovalor incluido
                    lam_last = J.eig1.eigenvalues[m, k1 - 1] if k1 else np.inf
                    eta_last = J.eig2.eigenvalues[m, k2 - 1] if k2 else np.inf
                    if lam_last <= eta_last:
                        k1 -= 1
                    else:
                        k2 -= 1
                    continue
                b1[row] = phi_conj[m, :, :k1] @ d[:k1]
                b2[row] = psi_conj[m, :, :k2] @ d[k1:]
                break

        if retries:
            logger.warning(f"🔄 Matriz M singular: {retries} reintentos con menos autovalores")

        fgrid = J.F11.fgrid
        return JointTransferEstimate(
            values1=SpectralService.mirror(b1, fgrid),
            values2=SpectralService.mirror(b2, fgrid),
            method=RegularizationMethod.TRUNCATION,
        )

    # ==================== TIKHONOV ====================

    @staticmethod
    def joint_tikhonov_transfer(J: JointSpectralEstimate, rho1: float, rho2: float) -> JointTransferEstimate:
        """
        [b1; b2]^T = [f^{Z1}; f^{Z2}]^T (w F + diag(ρ1 I, ρ2 I))^{-1}

        Raises:
            SolveFailureException si el sistema no se resuelve ni con jitter
        """
        if rho1 <= 0 or rho2 <= 0:
            raise ConfigException(message="ρ1 y ρ2 deben ser positivos", details={"rho1": rho1, "rho2": rho2})

        settings = get_settings()
        grid = J.grid
        p = grid.p
        w = grid.quad_weight
        fgrid = J.F11.fgrid
        half_idx = fgrid.half_indices
        shift = np.concatenate([np.full(p, rho1), np.full(p, rho2)])

        out = np.empty((half_idx.size, 2 * p), dtype=complex)
        for row, m in enumerate(half_idx):
            system = np.empty((2 * p, 2 * p), dtype=complex)
            system[:p, :p] = w * J.F11.values[m]
            system[p:, p:] = w * J.F22.values[m]
            system[:p, p:] = w * J.F12[m]
            system[p:, :p] = w * np.conj(J.F12[m].T)
            system += np.diag(shift)
            rhs = np.concatenate([J.Fz1.values[m], J.Fz2.values[m]])
            out[row] = JointModelService._jittered_solve(system.T, rhs, settings)

        values = SpectralService.mirror(out, fgrid)
        logger.debug(f"Transferencia conjunta de Tikhonov ρ1={rho1:.3e}, ρ2={rho2:.3e}")
        return JointTransferEstimate(
            values1=values[:, :p], values2=values[:, p:], method=RegularizationMethod.TIKHONOV
        )

    @staticmethod
    def _jittered_solve(system: np.ndarray, rhs: np.ndarray, settings) -> np.ndarray:
        try:
            return np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            pass
        scale = float(np.mean(np.abs(np.diag(system)))) or 1.0
        jitter = settings.JITTER_START
        while jitter <= settings.JITTER_MAX * (1 + 1e-9):
            try:
                solution = np.linalg.solve(system + jitter * scale * np.eye(system.shape[0]), rhs)
                logger.warning(f"⚠️ Sistema conjunto requirió jitter {jitter:.0e}")
                return solution
            except np.linalg.LinAlgError:
                jitter *= 10.0
        raise SolveFailureException(
            message="El sistema de Tikhonov conjunto no se pudo resolver",
            details={"size": int(system.shape[0])}
        )

    # ==================== FILTROS Y PRONÓSTICO ====================

    @staticmethod
    def joint_filters(
        transfer: JointTransferEstimate,
        fgrid: FrequencyGrid,
        grid: SpatialGrid,
        M: Optional[Union[int, str]] = "auto",
        K_max: Optional[int] = None
    ) -> Tuple[FilterSet, FilterSet]:
        """Filtros de ambos regresores recortados a un M común"""
        settings = get_settings()
        K_max = settings.K_MAX if K_max is None else K_max
        if M not in (None, "auto"):
            K_max = max(K_max, int(M))
        trial1 = FilterSet(M=K_max, values=RegressionService.fourier_coefficients(transfer.values1, fgrid, K_max, "joint_filters_1"))
        trial2 = FilterSet(M=K_max, values=RegressionService.fourier_coefficients(transfer.values2, fgrid, K_max, "joint_filters_2"))
        if M in (None, "auto"):
            chosen = max(
                RegressionService.choose_M(trial1, grid.quad_weight),
                RegressionService.choose_M(trial2, grid.quad_weight),
            )
        else:
            chosen = int(M)
        logger.info(f"✅ Filtros conjuntos estimados ({transfer.method.value}, M={chosen})")
        return trial1.trimmed(chosen), trial2.trimmed(chosen)

    @staticmethod
    def joint_forecast(
        curves1: PredictedCurves,
        dataX2: DenseFTS,
        filters1: FilterSet,
        filters2: FilterSet,
        mu2: Optional[np.ndarray],
        z_bar: float,
        s_range: Iterable[int],
        grid: SpatialGrid
    ) -> ForecastResult:
        """
        Ẑ_s = Z̄ + Σ_k ⟨b1_k, Π̂(X1_{s-k}) - μ̂1⟩ + Σ_k ⟨b2_k, X2_{s-k} - μ̂2⟩

        curves1 es el BLUP de la serie dispersa ya centrada. Fuera de
        1..T la serie densa se rellena con su media.
        """
        M = max(filters1.M, filters2.M)
        filters1, filters2 = filters1.padded(M), filters2.padded(M)
        mu2 = dataX2.mean() if mu2 is None else mu2
        curves2 = PredictedCurves.mean_padded(dataX2.centered(mu2), M)

        times = list(s_range)
        first = ForecastService.forecast_response(curves1, filters1, times, grid)
        second = ForecastService.forecast_response(curves2, filters2, times, grid)
        z_hat = z_bar + first.z_hat + second.z_hat
        return ForecastResult(curves=curves1, times=first.times, z_hat=z_hat)
