"""
ModelSelectionService - Validación cruzada de anchos de banda y regularización

Responsabilidades:
1. B_R: K-fold sobre pares de lag 0 (no ordenados), score contra productos
   crudos retenidos
2. B_V: K-fold sobre observaciones, score contra Y²
3. B_C: K-fold sobre productos cruzados Z_{t+h} Y_tk, ajuste por lag
4. υ / ρ: holdout contiguo (primer 80% entrena, último 20% evalúa)

Principios:
- Los folds se fijan antes de evaluar candidatos (semilla derivada)
- Los candidatos elegidos siempre pertenecen a la grilla
- Empates de regularización → el valor más grande
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple, Union
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    AllFoldsDegenerateException,
    InsufficientDataException,
    MissingCurveException,
    NoFiniteScoreException,
    NumericException,
)
from app.core.kernels import intercept_weights, local_polynomial_line
from app.core.linalg import interpolation_matrix
from app.schemas.data import ScalarTS, SparseFTS
from app.schemas.grids import SpatialGrid
from app.schemas.regression import RegularizationMethod
from app.schemas.selection import CVPlan, CVTrace, RegressorFit
from app.schemas.spectral import CrossSpectralEstimate
from app.services.forecast_service import ForecastService
from app.services.regression_service import RegressionService
from app.services.simulation_service import STREAM_FOLDS, SimulationService
from app.services.smoothing_service import SmoothingService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)


class ModelSelectionService:
    """Service para la selección de anchos de banda y parámetros de regularización"""

    # ==================== HELPERS ====================

    @staticmethod
    def assign_folds(count: int, folds: int, rng: np.random.Generator) -> np.ndarray:
        """Folds balanceados: permutación aleatoria módulo K"""
        return rng.permutation(count) % folds

    @staticmethod
    def lag0_pairs(data: SparseFTS) -> Tuple[np.ndarray, np.ndarray]:
        """Índices (j, k) con j < k dentro de cada tiempo"""
        offsets = data.offsets()
        first, second = [], []
        for t in range(data.T):
            n_t = int(offsets[t + 1] - offsets[t])
            if n_t < 2:
                continue
            j, k = np.triu_indices(n_t, 1)
            first.append(j + offsets[t])
            second.append(k + offsets[t])
        if not first:
            raise InsufficientDataException(
                message="No hay pares de lag 0 para validación cruzada",
                details={"T": data.T}
            )
        return np.concatenate(first), np.concatenate(second)

    @staticmethod
    def pick(
        candidates: List[float],
        scores: np.ndarray,
        parameter: str
    ) -> float:
        """Menor score promedio; AllFoldsDegenerate si ninguno es finito"""
        finite = np.isfinite(scores)
        if not finite.any():
            raise AllFoldsDegenerateException(
                message=f"Todos los folds degeneraron para {parameter}",
                details={"candidates": list(candidates)}
            )
        best = int(np.nanargmin(np.where(finite, scores, np.nan)))
        return float(candidates[best])

    @staticmethod
    def summarize(parameter: str, candidate: float, fold_scores: List[float], traces: List[CVTrace]) -> float:
        for fold, score in enumerate(fold_scores):
            traces.append(CVTrace(parameter=parameter, candidate=candidate, fold=fold, score=score))
        finite = [s for s in fold_scores if np.isfinite(s)]
        mean = float(np.mean(finite)) if finite else float("nan")
        traces.append(CVTrace(parameter=parameter, candidate=candidate, fold=-1, score=mean))
        return mean

    # ==================== B_R ====================

    @staticmethod
    def surface_fold_scores(
        data: SparseFTS,
        grid: SpatialGrid,
        bandwidth: float,
        pairs: Tuple[np.ndarray, np.ndarray],
        fold_of_pair: np.ndarray,
        folds: int
    ) -> List[float]:
        """
        Score por fold: superficie ajustada sin los pares del fold, evaluada
        por interpolación bilineal en los pares retenidos
        """
        settings = get_settings()
        basis = SmoothingService.kernel_basis(data.x, grid.points, bandwidth, 2)
        plain = SmoothingService.per_time(data, basis)
        weighted = SmoothingService.per_time(data, basis, data.y)
        y2 = data.y * data.y

        full_cache: Dict[Tuple[int, int, bool], np.ndarray] = {}

        def full(r: int, s: int, with_g: bool) -> np.ndarray:
            key = (r, s, with_g)
            if key not in full_cache:
                if with_g:
                    full_cache[key] = weighted[r].T @ weighted[s] - (basis[r] * y2[:, None]).T @ basis[s]
                else:
                    full_cache[key] = plain[r].T @ plain[s] - basis[r].T @ basis[s]
            return full_cache[key]

        scores = []
        for fold in range(folds):
            held = fold_of_pair == fold
            ia, ib = pairs[0][held], pairs[1][held]
            g = data.y[ia] * data.y[ib]

            def moment(r: int, s: int, with_g: bool) -> np.ndarray:
                # quitar ambas orientaciones de los pares retenidos
                left_a, left_b = basis[r][ia], basis[r][ib]
                if with_g:
                    left_a, left_b = left_a * g[:, None], left_b * g[:, None]
                return full(r, s, with_g) - left_a.T @ basis[s][ib] - left_b.T @ basis[s][ia]

            normal, rhs = SmoothingService.surface_system(moment)
            e, order = intercept_weights(normal, settings.SINGULAR_COND)
            if np.any(order == 0) or ia.size == 0:
                scores.append(float("nan"))
                continue

            surface = np.einsum("xyd,xyd->xy", e, rhs)
            surface = 0.5 * (surface + surface.T)
            left = interpolation_matrix(data.x[ia], grid.points)
            right = interpolation_matrix(data.x[ib], grid.points)
            predicted = np.einsum("ip,pq,iq->i", left, surface, right)
            scores.append(float(np.mean((g - predicted) ** 2)))
        return scores

    # ==================== B_V ====================

    @staticmethod
    def line_fold_scores(
        locations: np.ndarray,
        values: np.ndarray,
        grid: SpatialGrid,
        bandwidth: float,
        fold_of: np.ndarray,
        folds: int
    ) -> List[float]:
        """Score por fold de un suavizador local-lineal 1-D"""
        settings = get_settings()
        scores = []
        for fold in range(folds):
            held = fold_of == fold
            if not held.any() or held.all():
                scores.append(float("nan"))
                continue
            fitted, order = local_polynomial_line(
                locations[~held], values[~held], grid.points, bandwidth, 1, settings.SINGULAR_COND
            )
            if np.any(order == 0):
                scores.append(float("nan"))
                continue
            predicted = np.interp(locations[held], grid.points, fitted)
            scores.append(float(np.mean((values[held] - predicted) ** 2)))
        return scores

    @staticmethod
    def cv_bandwidths(
        data: SparseFTS,
        plan: CVPlan,
        grid: SpatialGrid
    ) -> Tuple[float, float, List[CVTrace]]:
        """
        K-fold para B_R (pares de lag 0) y B_V (observaciones)

        Returns:
            (B_R, B_V, trazas)
        """
        traces: List[CVTrace] = []
        rng = SimulationService.rng(plan.seed, STREAM_FOLDS)

        if len(plan.bandwidths_R) == 1:
            B_R = float(plan.bandwidths_R[0])
        else:
            pairs = ModelSelectionService.lag0_pairs(data)
            fold_of_pair = ModelSelectionService.assign_folds(pairs[0].size, plan.folds, rng)
            scores = np.array([
                ModelSelectionService.summarize(
                    "B_R", B, ModelSelectionService.surface_fold_scores(data, grid, B, pairs, fold_of_pair, plan.folds), traces
                )
                for B in plan.bandwidths_R
            ])
            B_R = ModelSelectionService.pick(plan.bandwidths_R, scores, "B_R")

        if len(plan.bandwidths_V) == 1:
            B_V = float(plan.bandwidths_V[0])
        else:
            fold_of_obs = ModelSelectionService.assign_folds(data.n_obs, plan.folds, rng)
            y2 = data.y ** 2
            scores = np.array([
                ModelSelectionService.summarize(
                    "B_V", B, ModelSelectionService.line_fold_scores(data.x, y2, grid, B, fold_of_obs, plan.folds), traces
                )
                for B in plan.bandwidths_V
            ])
            B_V = ModelSelectionService.pick(plan.bandwidths_V, scores, "B_V")

        logger.info(f"✅ CV de anchos de banda: B_R={B_R:.4f}, B_V={B_V:.4f}")
        return B_R, B_V, traces

    # ==================== B_C ====================

    @staticmethod
    def cross_products(dataX: SparseFTS, dataZ: ScalarTS, L: int) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Productos crudos (x_tk, Z_{t+h} Y_tk) por lag |h| < L, sin Z faltantes"""
        z = dataZ.z
        T = dataX.T
        products = []
        for h in range(-(L - 1), L):
            target = dataX.t + h
            valid = (target >= 1) & (target <= T)
            valid[valid] = np.isfinite(z[target[valid] - 1])
            products.append((dataX.x[valid], z[target[valid] - 1] * dataX.y[valid]))
        return products

    @staticmethod
    def cv_cross_bandwidth(
        dataX: SparseFTS,
        dataZ: ScalarTS,
        plan: CVPlan,
        grid: SpatialGrid,
        L: int
    ) -> Tuple[float, List[CVTrace]]:
        """K-fold para B_C con un ajuste local-lineal por lag"""
        traces: List[CVTrace] = []
        if len(plan.bandwidths_C) == 1:
            return float(plan.bandwidths_C[0]), traces

        rng = SimulationService.rng(plan.seed, STREAM_FOLDS, copy=1)
        products = ModelSelectionService.cross_products(dataX, dataZ, L)
        fold_of = [ModelSelectionService.assign_folds(x.size, plan.folds, rng) for x, _ in products]

        scores = []
        for B in plan.bandwidths_C:
            errors = np.zeros(plan.folds)
            counts = np.zeros(plan.folds)
            degenerate = np.zeros(plan.folds, dtype=bool)
            for (x, g), folds_h in zip(products, fold_of):
                if x.size == 0:
                    continue
                fold_scores = ModelSelectionService.line_fold_scores(x, g, grid, B, folds_h, plan.folds)
                for fold, score in enumerate(fold_scores):
                    held = int(np.sum(folds_h == fold))
                    if not np.isfinite(score):
                        degenerate[fold] |= held > 0
                        continue
                    errors[fold] += score * held
                    counts[fold] += held
            fold_scores = [
                float(errors[f] / counts[f]) if counts[f] > 0 and not degenerate[f] else float("nan")
                for f in range(plan.folds)
            ]
            scores.append(ModelSelectionService.summarize("B_C", B, fold_scores, traces))

        B_C = ModelSelectionService.pick(plan.bandwidths_C, np.array(scores), "B_C")
        logger.info(f"✅ CV de ancho de banda cruzado: B_C={B_C:.4f}")
        return B_C, traces

    # ==================== REGULARIZACIÓN ====================

    @staticmethod
    def regularization_candidates(plan: CVPlan, fit: RegressorFit) -> List[float]:
        """Fracciones de sup_ω λ̂_1^ω, de mayor a menor"""
        leading = fit.eig.leading
        if not leading > 0:
            leading = 1.0
        return sorted({float(f * leading) for f in plan.reg_fractions}, reverse=True)

    @staticmethod
    def holdout_regularization(
        dataX: Union[SparseFTS, None],
        dataZ: ScalarTS,
        method: RegularizationMethod,
        plan: CVPlan,
        fit: RegressorFit,
        B_C: Optional[float] = None,
        cross_train: Optional[CrossSpectralEstimate] = None,
        M: Union[int, str] = "auto"
    ) -> Tuple[float, List[CVTrace]]:
        """
        υ o ρ que minimiza el MSE de pronóstico en Z_{S+1..T}

        La densidad cruzada se estima sólo con Z_{1..S}; F̂^X y las curvas
        BLUP vienen de `fit` y se comparten entre candidatos.

        Raises:
            NoFiniteScoreException si ningún candidato da un MSE finito
        """
        T = dataZ.T
        if T < 25:
            raise InsufficientDataException(
                message=f"El holdout requiere T >= 25 (T={T})",
                details={"T": T}
            )
        S = plan.split(T)
        if cross_train is None:
            cross_train = SpectralService.estimate_cross_spectral(
                dataX, dataZ.truncated(S), fit.grid, fit.fgrid, fit.L, B_C
            )

        candidates = ModelSelectionService.regularization_candidates(plan, fit)
        held_times = np.arange(S + 1, T + 1)
        held_z = dataZ.z[S:]
        observed = np.isfinite(held_z)
        method = RegularizationMethod(method)

        def score(candidate: float) -> float:
            transfer = RegressionService.transfer(cross_train, fit.eig, method, candidate, fit.grid)
            filters = RegressionService.estimate_filters(transfer, fit.fgrid, fit.grid, M)
            result = ForecastService.forecast_response(fit.curves, filters, held_times, fit.grid)
            return float(np.mean((result.z_hat[observed] - held_z[observed]) ** 2))

        name = "upsilon" if method == RegularizationMethod.TRUNCATION else "rho"
        return ModelSelectionService.select_by_holdout(candidates, score, name)

    @staticmethod
    def select_by_holdout(
        candidates: List[float],
        score: Callable[[float], float],
        name: str
    ) -> Tuple[float, List[CVTrace]]:
        """
        Evaluar candidatos en paralelo y quedarse con el de menor score

        Se recorren de mayor a menor y sólo un score estrictamente menor
        reemplaza al actual, así los empates quedan en el valor más grande.
        """
        candidates = sorted(candidates, reverse=True)
        if len(candidates) == 1:
            return float(candidates[0]), []

        def safe(candidate: float) -> float:
            try:
                return score(candidate)
            except (NumericException, MissingCurveException, ValueError) as exc:
                logger.warning(f"⚠️ Candidato {candidate:.3e} sin score: {exc}")
                return float("nan")

        settings = get_settings()
        with ThreadPoolExecutor(max_workers=settings.MAX_THREADS) as executor:
            scores = list(executor.map(safe, candidates))

        traces = [CVTrace(parameter=name, candidate=c, fold=-1, score=s) for c, s in zip(candidates, scores)]

        best, best_score = None, np.inf
        for candidate, value in zip(candidates, scores):
            if np.isfinite(value) and value < best_score:
                best, best_score = candidate, value
        if best is None:
            raise NoFiniteScoreException(
                message=f"Ningún candidato de {name} produjo un score finito",
                details={"candidates": candidates}
            )

        logger.info(f"✅ Holdout {name}={best:.4e} (MSE={best_score:.4e})")
        return float(best), traces
