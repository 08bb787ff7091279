"""
Router: SIMULATE

Simular un escenario, estimar y medir contra la verdad

Escribe regressor.csv, response.csv y true_filters.csv junto a los
artefactos de la estimación; metrics.json incluye δ^B, δ^pred y el
δ^pred del oráculo. El manifest apunta a los CSV simulados, así que
`forecast --manifest` funciona sobre la corrida.
"""

from argparse import Namespace
from pathlib import Path
from typing import Optional
import logging

from app.adapters.csv_adapter import CsvAdapter
from app.routers.common import add_model_arguments, config_from_args, write_artifacts
from app.schemas.data import DenseFTS
from app.schemas.simulation import FilterShape, ProcessType, RegressionScheme, SimConfig
from app.services.pipeline_service import PipelineService

logger = logging.getLogger(__name__)


def n_max(text: str) -> Optional[int]:
    """'inf' = régimen completamente observado"""
    return None if text.lower() == "inf" else int(text)


def add_scenario_arguments(parser) -> None:
    group = parser.add_argument_group("escenario")
    group.add_argument("--process", choices=[p.value for p in ProcessType], default=ProcessType.FAR1.value)
    group.add_argument("--scheme", choices=[s.value for s in RegressionScheme], default=RegressionScheme.REG1.value)
    group.add_argument("--shape", choices=[s.value for s in FilterShape], default=FilterShape.B.value)
    group.add_argument("--T", type=int, default=300, help="Largo de la serie")
    group.add_argument("--nmax", type=n_max, default=40, help="N^max por curva o 'inf'")
    group.add_argument("--snr", type=float, default=20.0, help="Relación señal/ruido de la medición")
    group.add_argument("--tau2", type=float, default=0.001, help="Varianza del ruido de la respuesta")


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Simular un escenario y evaluar la estimación")
    add_scenario_arguments(parser)
    add_model_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    cfg = config_from_args(args, "simulate")
    sim = SimConfig(
        process=args.process,
        scheme=args.scheme,
        shape=args.shape,
        T=args.T,
        N_max=args.nmax,
        snr=args.snr,
        tau2=args.tau2,
        seed=cfg.seed,
        p=cfg.p,
    )
    out = Path(cfg.output)
    grid, _ = cfg.grids()

    data, Z, truth, results = PipelineService.simulate_and_estimate(sim, cfg, [cfg.method])
    if isinstance(data, DenseFTS):
        CsvAdapter.write_dense_csv(data, grid, out / "regressor.csv")
    else:
        CsvAdapter.write_sparse_csv(data, out / "regressor.csv")
    CsvAdapter.write_scalar_csv(Z, out / "response.csv")
    CsvAdapter.write_filters(truth.filters, grid, out / "true_filters.csv")

    result = results[0]
    result = result.model_copy(update={"config": result.config.model_copy(update={
        "regressor": str(out / "regressor.csv"),
        "response": str(out / "response.csv"),
        "regressor_dense": sim.dense,
        "simulation": sim,
    })})
    write_artifacts(result, out)
    logger.info(
        f"✅ simulate: δ^B={result.metrics['delta_B']:.4e}, δ^pred={result.metrics['delta_pred']:.4f}, "
        f"oráculo={result.metrics['delta_pred_oracle']:.4f}"
    )
    return 0
