"""
Router: FORECAST

Repetir una corrida desde su manifest.json

Los parámetros que la corrida original eligió por validación cruzada se
fijan a los valores resueltos, así que los filtros salen idénticos sin
volver a validar.
"""

from argparse import Namespace
from pathlib import Path
from typing import Any, Dict
import logging

from app.adapters.csv_adapter import CsvAdapter
from app.core.exceptions import ConfigException
from app.routers.common import add_run_arguments, run_pipeline
from app.schemas.run import RunConfig

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("forecast", help="Pronosticar con la configuración de un manifest.json")
    parser.add_argument("--manifest", required=True, help="manifest.json de una corrida previa")
    add_run_arguments(parser)
    parser.set_defaults(handler=handle)


def pinned_config(payload: Dict[str, Any]) -> RunConfig:
    """
    Configuración del manifest con los valores resueltos fijados

    B_V sólo se fija sin centrado: con --center y B_V="cv" la media usa
    el candidato central de la grilla, no el B_V elegido.
    """
    if "config" not in payload or "resolved" not in payload:
        raise ConfigException(message="El manifest no tiene 'config' y 'resolved'")
    config = dict(payload["config"])
    resolved = payload["resolved"]

    for name in ("B_R", "B_C", "param"):
        if resolved.get(name) is not None:
            config[name] = resolved[name]
    if resolved.get("B_V") is not None and not config.get("center"):
        config["B_V"] = resolved["B_V"]
    if resolved.get("param2") is not None:
        config["param2"] = resolved["param2"]
    config["L"] = payload.get("L", config.get("L"))
    config["command"] = "forecast"
    return RunConfig(**config)


def handle(args: Namespace) -> int:
    payload = CsvAdapter.read_json(args.manifest)
    cfg = pinned_config(payload)
    updates = {}
    for name in ("seed", "threads", "output"):
        if getattr(args, name, None) is not None:
            updates[name] = getattr(args, name)
    if "output" not in updates:
        updates["output"] = str(Path(args.manifest).parent / "forecast")
    cfg = cfg.model_copy(update=updates)

    run_pipeline(cfg, {"source_manifest": str(args.manifest)})
    logger.info(f"✅ forecast: artefactos en {cfg.output}")
    return 0
