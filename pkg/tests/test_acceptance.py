"""
Chequeos de aceptación Monte Carlo

Lentos (minutos): quedan fuera de la corrida por defecto, se activan con
`pytest -m slow`. El de determinismo de `reproduce` es chico y corre siempre.
"""

import numpy as np
import pytest

from app.main import main
from app.schemas.grids import SpatialGrid
from app.schemas.regression import FilterSet, RegularizationMethod
from app.schemas.run import RunConfig
from app.schemas.selection import CVPlan
from app.schemas.simulation import FilterShape, SimConfig
from app.services.model_selection_service import ModelSelectionService
from app.services.pipeline_service import PipelineService
from app.services.simulation_service import SimulationService
from app.services.smoothing_service import SmoothingService


def mean_scores(traces, parameter: str) -> dict:
    scores = {}
    for trace in traces:
        if trace.parameter == parameter:
            scores.setdefault(trace.candidate, []).append(trace.score)
    return {candidate: float(np.nanmean(values)) for candidate, values in scores.items()}


def test_reproduce_is_byte_identical(tmp_path):
    args = ["reproduce", "--seeds", "1", "--shapes", "b", "--lengths", "60", "--densities", "8",
            "--p", "11", "--n-freq", "32", "--seed", "5"]
    assert main([*args, "--output", str(tmp_path / "first")]) == 0
    assert main([*args, "--output", str(tmp_path / "second")]) == 0
    first = (tmp_path / "first" / "replications.csv").read_bytes()
    assert first == (tmp_path / "second" / "replications.csv").read_bytes()


@pytest.mark.slow
def test_sigma2_recovery():
    grid = SpatialGrid(p=31)
    within = 0
    for seed in range(10):
        data, _, truth = SimulationService.simulate(SimConfig(T=600, N_max=40, p=31, seed=seed), grid)
        raw = SmoothingService.raw_covariances(data, 0)
        Rbar = SmoothingService.smooth_diagonal_perpendicular(raw, grid, 0.15)
        V = SmoothingService.smooth_noisy_diagonal(data, grid, 0.1)
        sigma2 = SmoothingService.estimate_sigma2(V, Rbar, grid).sigma2
        within += abs(sigma2 - truth.sigma2) <= 0.3 * truth.sigma2
    assert within >= 8


@pytest.mark.slow
def test_cv_rejects_oversmoothing():
    grid = SpatialGrid(p=21)
    data, _, _ = SimulationService.simulate(SimConfig(T=200, N_max=20, p=21, seed=13), grid)
    plan = CVPlan(bandwidths_R=[0.1, 0.2, 10.0], bandwidths_V=[0.1, 0.2, 10.0], seed=1)
    B_R, B_V, traces = ModelSelectionService.cv_bandwidths(data, plan, grid)
    assert B_R != 10.0
    scores = mean_scores(traces, "B_R")
    assert scores[10.0] > scores[B_R]


@pytest.mark.slow
def test_oracle_gap():
    cfg = RunConfig(p=21, n_freq=64, B_R=0.15, B_V=0.15, B_C=0.15, method="tikh", param="cv")
    estimated, oracle = [], []
    for seed in range(10):
        sim = SimConfig(T=300, N_max=40, p=21, shape=FilterShape.B, seed=seed)
        _, _, _, results = PipelineService.simulate_and_estimate(sim, cfg.model_copy(update={"seed": seed}))
        estimated.append(results[0].metrics["delta_pred"])
        oracle.append(results[0].metrics["delta_pred_oracle"])
    ratio = np.median(estimated) / np.median(oracle)
    assert 1.0 <= ratio <= 6.0


@pytest.mark.slow
def test_joint_model_degenerates_with_independent_regressor():
    grid = SpatialGrid(p=21)
    data, Z, _ = SimulationService.simulate(SimConfig(T=600, N_max=40, p=21, seed=21), grid)
    dense, _, _ = SimulationService.simulate(SimConfig(T=600, N_max=None, p=21, seed=22), grid)
    cfg = RunConfig(p=21, n_freq=64, B_R=0.15, B_V=0.15, B_C=0.15, method="tikh", param=0.05,
                    param2=0.05, center=True)

    single = PipelineService.estimate_scalar(data, Z, cfg, [RegularizationMethod.TIKHONOV])[0]
    joint = PipelineService.estimate(data, Z, cfg, dataX2=dense)
    distance = SimulationService.metric_delta_B(joint.filters, single.filters, grid)
    size = SimulationService.metric_delta_B(single.filters, FilterSet.zeros(0, grid.p), grid)
    assert np.sqrt(distance / size) <= 0.15


METHODS = [RegularizationMethod.TRUNCATION, RegularizationMethod.TIKHONOV]


def delta_B_by_method(shape: FilterShape, T: int, seeds=range(10)) -> dict:
    """δ^B por regularizador y semilla en FAR(1), reg1, N_max=40"""
    cfg = RunConfig(p=21, n_freq=64, B_R=0.15, B_V=0.15, B_C=0.15, param="cv")
    deltas = {method: [] for method in METHODS}
    for seed in seeds:
        sim = SimConfig(T=T, N_max=40, p=21, shape=shape, seed=seed)
        _, _, _, results = PipelineService.simulate_and_estimate(sim, cfg.model_copy(update={"seed": seed}), METHODS)
        for result in results:
            deltas[result.config.method].append(result.metrics["delta_B"])
    return deltas


@pytest.mark.slow
@pytest.mark.parametrize("shape", [FilterShape.A, FilterShape.B])
def test_filter_error_decreases_with_length(shape):
    short = delta_B_by_method(shape, T=300)
    long = delta_B_by_method(shape, T=1200)
    for method in METHODS:
        assert np.median(long[method]) < np.median(short[method]), method.value


@pytest.mark.slow
@pytest.mark.parametrize("shape, better, worse", [
    (FilterShape.B, RegularizationMethod.TRUNCATION, RegularizationMethod.TIKHONOV),
    (FilterShape.A, RegularizationMethod.TIKHONOV, RegularizationMethod.TRUNCATION),
])
def test_regularizer_dominance_by_shape(shape, better, worse):
    # sin(2πx) vive en las primeras autofunciones; cos(4πx) no
    deltas = delta_B_by_method(shape, T=300)
    wins = sum(b <= w for b, w in zip(deltas[better], deltas[worse]))
    assert wins >= 7
