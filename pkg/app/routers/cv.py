"""
Router: CV

Validación cruzada de todos los parámetros de ajuste

Equivale a `estimate` con B_R, B_V, B_C y el parámetro de regularización
en "cv"; además escribe cv_selection.json con los valores elegidos.
"""

from argparse import Namespace
from pathlib import Path
import logging

from app.adapters.csv_adapter import CsvAdapter
from app.routers.common import add_input_arguments, add_model_arguments, config_from_args, run_pipeline

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("cv", help="Elegir anchos de banda y regularización por validación cruzada")
    add_input_arguments(parser)
    add_model_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    cfg = config_from_args(args, "cv", B_R="cv", B_V="cv", B_C="cv", param="cv")
    result = run_pipeline(cfg)
    CsvAdapter.write_json(result.resolved, Path(cfg.output) / "cv_selection.json")
    logger.info(f"✅ cv: {result.resolved}")
    return 0
