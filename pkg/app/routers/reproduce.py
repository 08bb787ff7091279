"""
Router: REPRODUCE

Grilla de replicaciones de simulación → replications.csv

- Reducida (default): FAR(1), reg1, formas a y b, T=300, N^max=40
- Completa (--full): 2 procesos × 4 largos × 5 densidades × 3 esquemas
  × 2 formas, días de cómputo

Cada replicación corre con su propia semilla y ambos regularizadores.
"""

from argparse import Namespace
from itertools import product
from pathlib import Path
from typing import List
import logging

from app.adapters.csv_adapter import CsvAdapter
from app.routers.common import add_run_arguments, config_from_args
from app.routers.simulate import n_max
from app.schemas.regression import RegularizationMethod
from app.schemas.simulation import SimConfig
from app.services.pipeline_service import PipelineService

logger = logging.getLogger(__name__)

REDUCED = {
    "processes": ["far1"],
    "schemes": ["reg1"],
    "shapes": ["a", "b"],
    "lengths": [300],
    "densities": [40],
    "seeds": 3,
}

FULL = {
    "processes": ["far1", "fma4"],
    "schemes": ["reg1", "reg2", "reg3"],
    "shapes": ["a", "b"],
    "lengths": [300, 600, 900, 1200],
    "densities": [10, 20, 40, 60, None],
    "seeds": 90,
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("reproduce", help="Correr la grilla de replicaciones")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--reduced", dest="full", action="store_false", help="Grilla reducida (default)")
    mode.add_argument("--full", dest="full", action="store_true", help="Grilla completa")
    parser.add_argument("--seeds", type=int, help="Replicaciones por escenario")
    parser.add_argument("--processes", nargs="+", choices=["far1", "fma4"])
    parser.add_argument("--schemes", nargs="+", choices=["reg1", "reg2", "reg3"])
    parser.add_argument("--shapes", nargs="+", choices=["a", "b"])
    parser.add_argument("--lengths", nargs="+", type=int, help="Valores de T")
    parser.add_argument("--densities", nargs="+", type=n_max, help="Valores de N^max ('inf' = denso)")
    parser.add_argument("--p", type=int, help="Puntos de la grilla espacial")
    parser.add_argument("--n-freq", dest="n_freq", type=int, help="Frecuencias en (-π, π]")
    add_run_arguments(parser)
    parser.set_defaults(handler=handle, full=False)


def scenarios(args: Namespace, base_seed: int, p: int) -> List[SimConfig]:
    """Escenarios en orden fijo; la semilla de la replicación r es base_seed + r"""
    grid = FULL if args.full else REDUCED

    def pick(name: str) -> list:
        return getattr(args, name, None) or grid[name]

    seeds = args.seeds or grid["seeds"]
    return [
        SimConfig(process=process, scheme=scheme, shape=shape, T=T, N_max=density, seed=base_seed + r, p=p)
        for process, scheme, shape, T, density, r in product(
            pick("processes"), pick("schemes"), pick("shapes"), pick("lengths"), pick("densities"), range(seeds)
        )
    ]


def handle(args: Namespace) -> int:
    cfg = config_from_args(args, "reproduce")
    sims = scenarios(args, cfg.seed, cfg.p)
    methods = [RegularizationMethod.TRUNCATION, RegularizationMethod.TIKHONOV]
    logger.info(f"🔄 reproduce: {len(sims)} replicaciones ({'completa' if args.full else 'reducida'})")

    rows = PipelineService.reproduce(sims, cfg, methods)
    out = Path(cfg.output)
    CsvAdapter.write_replications(rows, out / "replications.csv")
    CsvAdapter.write_json({
        "config": cfg.model_dump(mode="json"),
        "scenarios": [sim.model_dump(mode="json") for sim in sims],
        "versions": CsvAdapter.versions(),
    }, out / "manifest.json")
    logger.info(f"✅ reproduce: {len(rows)} filas en {out / 'replications.csv'}")
    return 0
