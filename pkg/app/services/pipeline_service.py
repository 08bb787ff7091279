"""
PipelineService - Orquestación del algoritmo de pronóstico completo

Responsabilidades:
1. Ajustar el regresor (disperso o denso): F̂^X, R̂_h, σ̂², autosistema, BLUP
2. Regresión escalar, conjunta (disperso + denso) o con respuesta funcional
3. Evaluación de escenarios simulados (δ^B, δ^pred, oráculo)
4. Replicaciones en paralelo por semilla

Principios:
- Toda la aleatoriedad sale de la semilla de la corrida
- Los parámetros fijos de la configuración saltean la validación cruzada
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConfigException, DataException
from app.core.kernels import bartlett_span_default
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.extensions import JointSpectralEstimate
from app.schemas.forecast import ForecastResult, PredictedCurves
from app.schemas.grids import FrequencyGrid, NoiseEstimate, SpatialGrid
from app.schemas.regression import FilterSet, RegularizationMethod
from app.schemas.run import PipelineResult, ReplicationRow, RunConfig
from app.schemas.selection import CVPlan, CVTrace, RegressorFit
from app.schemas.simulation import GroundTruth, SimConfig
from app.schemas.spectral import CrossSpectralEstimate
from app.services.forecast_service import ForecastService
from app.services.functional_response_service import FunctionalResponseService
from app.services.joint_model_service import JointModelService
from app.services.model_selection_service import ModelSelectionService
from app.services.regression_service import RegressionService
from app.services.simulation_service import SimulationService
from app.services.smoothing_service import SmoothingService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

Regressor = Union[SparseFTS, DenseFTS]


class PipelineService:
    """Service que encadena los pasos 1-4 del pronóstico"""

    # ==================== PREPARACIÓN ====================

    @staticmethod
    def resolve_L(cfg: RunConfig, T: int) -> int:
        L = cfg.L if cfg.L is not None else bartlett_span_default(T)
        if L >= T:
            raise ConfigException(
                message=f"El span L={L} debe ser menor que T={T}",
                details={"L": L, "T": T}
            )
        return L

    @staticmethod
    def mean_bandwidth(cfg: RunConfig, plan: CVPlan) -> float:
        """Ancho para μ̂: B_V fijo o el candidato central de la grilla"""
        if cfg.B_V != "cv":
            return float(cfg.B_V)
        return float(plan.bandwidths_V[len(plan.bandwidths_V) // 2])

    @staticmethod
    def fit_regressor(
        X: Regressor,
        Z: Optional[ScalarTS],
        cfg: RunConfig,
        grid: SpatialGrid,
        fgrid: FrequencyGrid,
        L: int,
        plan: CVPlan
    ) -> Tuple[RegressorFit, Dict[str, Optional[float]], Dict[str, List[CVTrace]]]:
        """
        Pasos 1-3 sobre el regresor

        Disperso: CV de B_R/B_V, F̂^X agrupado, R̂_h, σ̂² y BLUP en
        [1 - pad, T + pad]. Denso: Bartlett funcional y curvas rellenadas
        con la media (cero tras centrar).
        """
        pad = cfg.pad()
        if isinstance(X, DenseFTS):
            if Z is None:
                raise ConfigException(message="El régimen denso requiere respuesta escalar")
            F, _ = JointModelService.dense_bartlett(X, Z, grid, fgrid, L)
            R = SpectralService.invert_to_autocov(F, fgrid)
            fit = RegressorFit(
                grid=grid,
                fgrid=fgrid,
                L=L,
                spectral=F,
                eig=SpectralService.eigendecompose(F, grid),
                R=R,
                curves=PredictedCurves.mean_padded(X.centered(), pad),
            )
            return fit, {"B_R": None, "B_V": None, "sigma2": None}, {}

        B_R, B_V, traces = ModelSelectionService.cv_bandwidths(X, plan, grid)
        raw = SmoothingService.raw_covariances(X, L)
        F = SpectralService.estimate_spectral_density(raw, grid, fgrid, L, B_R)
        R = SpectralService.invert_to_autocov(F, fgrid)
        Rbar = SmoothingService.smooth_diagonal_perpendicular(raw, grid, B_R)
        V = SmoothingService.smooth_noisy_diagonal(X, grid, B_V)
        sigma2 = SmoothingService.estimate_sigma2(V, Rbar, grid)
        curves = ForecastService.blup_latent(X, R, sigma2, grid, pad, cfg.blup_window())

        fit = RegressorFit(
            grid=grid,
            fgrid=fgrid,
            L=L,
            B_R=B_R,
            spectral=F,
            eig=SpectralService.eigendecompose(F, grid),
            R=R,
            sigma2=sigma2,
            curves=curves,
        )
        resolved = {"B_R": B_R, "B_V": B_V, "sigma2": sigma2.sigma2}
        return fit, resolved, {"bandwidths": traces}

    @staticmethod
    def scalar_cross(
        X: Regressor,
        Z: ScalarTS,
        fit: RegressorFit,
        plan: CVPlan
    ) -> Tuple[Optional[float], CrossSpectralEstimate, List[CVTrace]]:
        """B_C (por CV si corresponde) y f̂^{ZX} con toda la respuesta"""
        if isinstance(X, DenseFTS):
            _, cross = JointModelService.dense_bartlett(X, Z, fit.grid, fit.fgrid, fit.L)
            return None, cross, []
        B_C, traces = ModelSelectionService.cv_cross_bandwidth(X, Z, plan, fit.grid, fit.L)
        cross = SpectralService.estimate_cross_spectral(X, Z, fit.grid, fit.fgrid, fit.L, B_C)
        return B_C, cross, traces

    @staticmethod
    def regress(
        X: Regressor,
        Z: ScalarTS,
        fit: RegressorFit,
        cross: CrossSpectralEstimate,
        B_C: Optional[float],
        method: RegularizationMethod,
        cfg: RunConfig,
        plan: CVPlan
    ) -> Tuple[float, FilterSet, List[CVTrace]]:
        """Parámetro (holdout o fijo), transferencia y filtros"""
        traces: List[CVTrace] = []
        if cfg.param == "cv":
            cross_train = None
            if isinstance(X, DenseFTS):
                S = plan.split(Z.T)
                _, cross_train = JointModelService.dense_bartlett(X, Z.truncated(S), fit.grid, fit.fgrid, fit.L)
            param, traces = ModelSelectionService.holdout_regularization(
                X if isinstance(X, SparseFTS) else None,
                Z, method, plan, fit, B_C=B_C, cross_train=cross_train, M=cfg.M,
            )
        else:
            param = float(cfg.param)

        transfer = RegressionService.transfer(cross, fit.eig, method, param, fit.grid)
        filters = RegressionService.estimate_filters(transfer, fit.fgrid, fit.grid, cfg.M)
        return param, filters, traces

    @staticmethod
    def shifted(result: ForecastResult, shift) -> ForecastResult:
        return ForecastResult(curves=result.curves, times=result.times, z_hat=result.z_hat + shift)

    @staticmethod
    def scalar_metrics(forecast: ForecastResult, Z: ScalarTS) -> Dict[str, float]:
        """MSE dentro de muestra y su versión relativa a la varianza muestral"""
        z = Z.z[forecast.times - 1]
        observed = np.isfinite(z)
        mse = float(np.mean((forecast.z_hat[observed] - z[observed]) ** 2))
        variance = float(np.nanvar(Z.z))
        return {
            "mse_in_sample": mse,
            "delta_pred_in_sample": mse / variance if variance > 0 else float("nan"),
        }

    # ==================== ESTIMACIÓN ====================

    @staticmethod
    def estimate(
        dataX: Regressor,
        dataZ: Union[ScalarTS, SparseFTS],
        cfg: RunConfig,
        dataX2: Optional[DenseFTS] = None
    ) -> PipelineResult:
        """Despachar según el tipo de respuesta y la presencia de un segundo regresor"""
        if dataZ.T != dataX.T:
            raise DataException(
                message=f"La respuesta tiene T={dataZ.T} y el regresor T={dataX.T}",
                details={"T_Z": dataZ.T, "T_X": dataX.T}
            )
        if dataX2 is not None:
            return PipelineService.estimate_joint_model(dataX, dataX2, dataZ, cfg)
        if isinstance(dataZ, SparseFTS):
            return PipelineService.estimate_functional(dataX, dataZ, cfg)
        return PipelineService.estimate_scalar(dataX, dataZ, cfg, [cfg.method])[0]

    @staticmethod
    def estimate_scalar(
        dataX: Regressor,
        dataZ: ScalarTS,
        cfg: RunConfig,
        methods: Sequence[RegularizationMethod]
    ) -> List[PipelineResult]:
        """
        Modelo escalar; comparte el ajuste del regresor entre métodos

        Returns:
            Un PipelineResult por método, en el orden pedido
        """
        grid, fgrid = cfg.grids()
        plan = cfg.plan()
        L = PipelineService.resolve_L(cfg, dataX.T)
        logger.info(f"🔄 Estimación escalar: T={dataX.T}, L={L}, p={grid.p}, n_freq={fgrid.n_freq}")

        X, mu = dataX, None
        Z, z_bar = dataZ, 0.0
        if cfg.center:
            z_bar = dataZ.mean()
            Z = dataZ.centered()
            if isinstance(dataX, SparseFTS):
                mu = SmoothingService.smooth_mean(dataX, grid, PipelineService.mean_bandwidth(cfg, plan))
                X = dataX.centered(mu, grid)
        if isinstance(dataX, DenseFTS):
            mu = dataX.mean()

        fit, resolved, traces = PipelineService.fit_regressor(X, Z, cfg, grid, fgrid, L, plan)
        B_C, cross, traces_cross = PipelineService.scalar_cross(X, Z, fit, plan)
        if traces_cross:
            traces["cross"] = traces_cross

        results = []
        for method in methods:
            method = RegularizationMethod(method)
            param, filters, traces_reg = PipelineService.regress(X, Z, fit, cross, B_C, method, cfg, plan)
            forecast = ForecastService.forecast_response(fit.curves, filters, range(1, dataX.T + 1), grid)
            forecast = PipelineService.shifted(forecast, z_bar)
            run_traces = dict(traces)
            if traces_reg:
                run_traces["regularization"] = traces_reg
            results.append(PipelineResult(
                config=cfg.model_copy(update={"method": method}),
                grid=grid,
                fgrid=fgrid,
                L=L,
                resolved={**resolved, "B_C": B_C, "param": param, "M": float(filters.M)},
                spectral=fit.spectral,
                cross=cross,
                R=fit.R,
                filters=filters,
                forecast=forecast,
                z_bar=z_bar,
                mu=mu,
                traces=run_traces,
                metrics=PipelineService.scalar_metrics(forecast, dataZ),
            ))
            logger.info(f"✅ Modelo {method.value}: param={param:.4e}, M={filters.M}")
        return results

    @staticmethod
    def estimate_joint_model(
        dataX: SparseFTS,
        dataX2: DenseFTS,
        dataZ: ScalarTS,
        cfg: RunConfig
    ) -> PipelineResult:
        """Regresor disperso + regresor denso, respuesta escalar centrada por Z̄"""
        if not isinstance(dataX, SparseFTS) or not isinstance(dataZ, ScalarTS):
            raise ConfigException(message="El modelo conjunto requiere regresor disperso y respuesta escalar")
        if dataX2.T != dataX.T:
            raise DataException(
                message=f"Los regresores tienen T={dataX.T} y T={dataX2.T}",
                details={"T_1": dataX.T, "T_2": dataX2.T}
            )

        grid, fgrid = cfg.grids()
        plan = cfg.plan()
        T = dataX.T
        L = PipelineService.resolve_L(cfg, T)
        method = RegularizationMethod(cfg.method)
        logger.info(f"🔄 Estimación conjunta: T={T}, L={L}")

        z_bar = dataZ.mean()
        Z = dataZ.centered()
        mu1 = SmoothingService.smooth_mean(dataX, grid, PipelineService.mean_bandwidth(cfg, plan))
        X1 = dataX.centered(mu1, grid)

        fit, resolved, traces = PipelineService.fit_regressor(X1, Z, cfg, grid, fgrid, L, plan)
        B_C, Fz1, traces_cross = PipelineService.scalar_cross(X1, Z, fit, plan)
        if traces_cross:
            traces["cross"] = traces_cross
        joint = JointModelService.estimate_joint(
            dataX, dataX2, Z, grid, fgrid, L, fit.B_R, B_C,
            mu1=mu1, F11=fit.spectral, Fz1=Fz1, eig1=fit.eig
        )

        def transfer(J: JointSpectralEstimate, p1: float, p2: float):
            if method == RegularizationMethod.TRUNCATION:
                K1, K2 = JointModelService.joint_thresholds(J, p1, p2)
                return JointModelService.joint_truncation_transfer(J, K1, K2)
            return JointModelService.joint_tikhonov_transfer(J, p1, p2)

        lead1 = max(joint.eig1.leading, 1e-12)
        lead2 = max(joint.eig2.leading, 1e-12)
        if cfg.param == "cv":
            S = plan.split(T)
            Z_train = Z.truncated(S)
            train = joint.model_copy(update={
                "Fz1": SpectralService.estimate_cross_spectral(X1, Z_train, grid, fgrid, L, B_C),
                "Fz2": JointModelService.dense_bartlett(dataX2, Z_train, grid, fgrid, L)[1],
            })
            held_times = np.arange(S + 1, T + 1)
            held_z = Z.z[S:]
            observed = np.isfinite(held_z)

            def score(fraction: float) -> float:
                f1, f2 = JointModelService.joint_filters(
                    transfer(train, fraction * lead1, fraction * lead2), fgrid, grid, cfg.M
                )
                result = JointModelService.joint_forecast(fit.curves, dataX2, f1, f2, joint.mu2, 0.0, held_times, grid)
                return float(np.mean((result.z_hat[observed] - held_z[observed]) ** 2))

            fraction, traces["regularization"] = ModelSelectionService.select_by_holdout(
                list(plan.reg_fractions), score, "fraction"
            )
            p1, p2 = fraction * lead1, fraction * lead2
        else:
            p1 = float(cfg.param)
            p2 = float(cfg.param2) if cfg.param2 is not None else p1

        filters1, filters2 = JointModelService.joint_filters(transfer(joint, p1, p2), fgrid, grid, cfg.M)
        forecast = JointModelService.joint_forecast(
            fit.curves, dataX2, filters1, filters2, joint.mu2, z_bar, range(1, T + 1), grid
        )
        logger.info(f"✅ Modelo conjunto {method.value}: param=({p1:.4e}, {p2:.4e}), M={filters1.M}")
        return PipelineResult(
            config=cfg,
            grid=grid,
            fgrid=fgrid,
            L=L,
            resolved={**resolved, "B_C": B_C, "param": p1, "param2": p2, "M": float(filters1.M)},
            spectral=fit.spectral,
            cross=Fz1,
            R=fit.R,
            filters=filters1,
            filters2=filters2,
            forecast=forecast,
            z_bar=z_bar,
            mu=mu1,
            traces=traces,
            metrics=PipelineService.scalar_metrics(forecast, dataZ),
        )

    @staticmethod
    def estimate_functional(dataX: Regressor, dataZ: SparseFTS, cfg: RunConfig) -> PipelineResult:
        """Respuesta funcional dispersa: transferencia de operador y curvas pronosticadas"""
        if not isinstance(dataX, SparseFTS):
            raise ConfigException(message="La respuesta funcional requiere un regresor disperso")

        grid, fgrid = cfg.grids()
        plan = cfg.plan()
        T = dataX.T
        L = PipelineService.resolve_L(cfg, T)
        method = RegularizationMethod(cfg.method)
        logger.info(f"🔄 Estimación con respuesta funcional: T={T}, L={L}")

        X, Zs = dataX, dataZ
        mu, mu_z = None, np.zeros(grid.p)
        if cfg.center:
            B_mu = PipelineService.mean_bandwidth(cfg, plan)
            mu = SmoothingService.smooth_mean(dataX, grid, B_mu)
            mu_z = SmoothingService.smooth_mean(dataZ, grid, B_mu)
            X = dataX.centered(mu, grid)
            Zs = dataZ.centered(mu_z, grid)

        fit, resolved, traces = PipelineService.fit_regressor(X, None, cfg, grid, fgrid, L, plan)
        cross = FunctionalResponseService.est_cross_spectral_functional(X, Zs, grid, fgrid, L, fit.B_R)

        if cfg.param == "cv":
            S = plan.split(T)
            held = Zs.t > S
            if not held.any():
                raise DataException(message="La respuesta no tiene observaciones en el holdout", details={"S": S})
            cross_train = FunctionalResponseService.est_cross_spectral_functional(
                X, Zs.truncated(S), grid, fgrid, L, fit.B_R
            )
            held_times = np.arange(S + 1, T + 1)

            def score(candidate: float) -> float:
                op = FunctionalResponseService.operator_transfer(cross_train, fit.eig, method, candidate, grid)
                kernels = FunctionalResponseService.operator_filters(op, fgrid, grid, cfg.M)
                result = FunctionalResponseService.forecast_functional_response(fit.curves, kernels, held_times, grid)
                return float(np.mean(FunctionalResponseService.sparse_errors(result, Zs, grid) ** 2))

            param, traces["regularization"] = ModelSelectionService.select_by_holdout(
                ModelSelectionService.regularization_candidates(plan, fit), score,
                "upsilon" if method == RegularizationMethod.TRUNCATION else "rho",
            )
        else:
            param = float(cfg.param)

        op = FunctionalResponseService.operator_transfer(cross, fit.eig, method, param, grid)
        kernels = FunctionalResponseService.operator_filters(op, fgrid, grid, cfg.M)
        forecast = FunctionalResponseService.forecast_functional_response(fit.curves, kernels, range(1, T + 1), grid)
        errors = FunctionalResponseService.sparse_errors(forecast, Zs, grid)
        forecast = PipelineService.shifted(forecast, mu_z[None, :])

        logger.info(f"✅ Respuesta funcional {method.value}: param={param:.4e}, M={kernels.M}")
        return PipelineResult(
            config=cfg,
            grid=grid,
            fgrid=fgrid,
            L=L,
            resolved={**resolved, "B_C": None, "param": param, "M": float(kernels.M)},
            spectral=fit.spectral,
            cross=cross,
            R=fit.R,
            operator_filters=kernels,
            forecast=forecast,
            mu=mu,
            traces=traces,
            metrics={"mse_in_sample": float(np.mean(errors ** 2)) if errors.size else float("nan")},
        )

    # ==================== SIMULACIÓN ====================

    @staticmethod
    def evaluate_simulation(
        results: Sequence[PipelineResult],
        sim: SimConfig,
        truth: GroundTruth,
        cfg: RunConfig
    ) -> List[Dict[str, float]]:
        """
        δ^B contra los filtros verdaderos y δ^pred en una copia independiente

        Los pronósticos de la copia usan R̂, σ̂² y b̂_k de la muestra original;
        el oráculo usa la dinámica verdadera con el BLUP exacto.
        """
        grid = results[0].grid
        plan = cfg.plan()
        copy_data, copy_Z, _ = SimulationService.simulate(sim, grid, copy=1)
        S = plan.split(sim.T)
        times = np.arange(S, sim.T + 1)
        z_true = copy_Z.z[S - 1:]
        pad = max(cfg.pad(), truth.filters.M)

        if isinstance(copy_data, DenseFTS):
            oracle_curves = PredictedCurves.mean_padded(copy_data.curves, pad)
            oracle = ForecastService.forecast_response(oracle_curves, truth.filters, times, grid)
        else:
            oracle = ForecastService.oracle_forecast(
                copy_data, truth.R, NoiseEstimate(sigma2=truth.sigma2), truth.filters, times, grid, window=None
            )
        delta_oracle = SimulationService.metric_delta_pred(oracle.z_hat, z_true, truth.var_z)

        first = results[0]
        if isinstance(copy_data, DenseFTS):
            curves = PredictedCurves.mean_padded(copy_data.centered(first.mu), pad)
        else:
            data = copy_data.centered(first.mu, grid) if first.mu is not None else copy_data
            curves = ForecastService.blup_latent(
                data, first.R, NoiseEstimate(sigma2=first.resolved["sigma2"]), grid, pad, cfg.blup_window()
            )

        metrics = []
        for result in results:
            predicted = ForecastService.forecast_response(curves, result.filters, times, grid)
            metrics.append({
                "delta_B": SimulationService.metric_delta_B(result.filters, truth.filters, grid),
                "delta_pred": SimulationService.metric_delta_pred(predicted.z_hat + result.z_bar, z_true, truth.var_z),
                "delta_pred_oracle": delta_oracle,
                "sigma2_true": truth.sigma2,
                "sigma2_hat": result.resolved["sigma2"] if result.resolved.get("sigma2") is not None else float("nan"),
            })
        return metrics

    @staticmethod
    def simulate_and_estimate(
        sim: SimConfig,
        cfg: RunConfig,
        methods: Optional[Sequence[RegularizationMethod]] = None
    ) -> Tuple[Regressor, ScalarTS, GroundTruth, List[PipelineResult]]:
        """Simular un escenario, estimar con cada método y adjuntar las métricas de simulación"""
        methods = list(methods) if methods else [cfg.method]
        grid, _ = cfg.grids()
        data, Z, truth = SimulationService.simulate(sim, grid)
        results = PipelineService.estimate_scalar(data, Z, cfg, methods)
        evaluated = PipelineService.evaluate_simulation(results, sim, truth, cfg)
        results = [
            result.model_copy(update={"metrics": {**result.metrics, **extra}})
            for result, extra in zip(results, evaluated)
        ]
        return data, Z, truth, results

    @staticmethod
    def replicate(sim: SimConfig, cfg: RunConfig, methods: Sequence[RegularizationMethod]) -> List[ReplicationRow]:
        """Una replicación: filas por método con δ^B, δ^pred y δ^pred del oráculo"""
        run_cfg = cfg.model_copy(update={"seed": sim.seed, "p": sim.p})
        _, _, _, results = PipelineService.simulate_and_estimate(sim, run_cfg, methods)
        n_max = "inf" if sim.dense else str(sim.N_max)
        return [
            ReplicationRow(
                process=sim.process.value,
                scheme=sim.scheme.value,
                shape=sim.shape.value,
                T=sim.T,
                N_max=n_max,
                method=result.config.method.value,
                delta_B=result.metrics["delta_B"],
                delta_pred=result.metrics["delta_pred"],
                delta_pred_oracle=result.metrics["delta_pred_oracle"],
                seed=sim.seed,
            )
            for result in results
        ]

    @staticmethod
    def reproduce(
        scenarios: Sequence[SimConfig],
        cfg: RunConfig,
        methods: Sequence[RegularizationMethod]
    ) -> List[ReplicationRow]:
        """
        Replicaciones en paralelo (una tarea por escenario y semilla)

        El orden de las filas sigue el de `scenarios`, no el de finalización.
        """
        settings = get_settings()
        workers = cfg.threads or settings.MAX_THREADS
        logger.info(f"🔄 Reproduciendo {len(scenarios)} replicaciones con {workers} hilos")
        with ThreadPoolExecutor(max_workers=workers) as executor:
            batches = list(executor.map(lambda sim: PipelineService.replicate(sim, cfg, methods), scenarios))
        rows = [row for batch in batches for row in batch]
        logger.info(f"✅ {len(rows)} filas de replicación")
        return rows
