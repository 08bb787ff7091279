"""
Router: ESTIMATE

Estimar el modelo desde archivos CSV y escribir todos los artefactos

Características:
- Regresor disperso o denso, respuesta escalar o funcional dispersa
- Modelo conjunto con un segundo regresor denso (--regressor2)
- Anchos de banda y regularización fijos o por validación cruzada
"""

from argparse import Namespace
import logging

from app.routers.common import add_input_arguments, add_model_arguments, config_from_args, run_pipeline

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("estimate", help="Estimar filtros y pronósticos desde CSV")
    add_input_arguments(parser)
    add_model_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    cfg = config_from_args(args, "estimate")
    result = run_pipeline(cfg)
    logger.info(f"✅ estimate: {result.metrics}")
    return 0
