"""
Sparse Functional Lagged Regression - CLI

Principios:
- Minimalista: Solo lo esencial
- Modular: Cada subcomando = un router
- Errores estructurados: JSON en stderr y código de salida por familia

Códigos de salida: 0 ok, 2 configuración, 3 datos, 4 falla numérica
"""

from argparse import ArgumentParser
from typing import List, Optional
import json
import logging
import sys
import time

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.exceptions import BaseAppException, ConfigException
from app.routers import cv, estimate, forecast, reproduce, simulate

# Configuración
settings = get_settings()

# Logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="sflr",
        description=f"{settings.APP_NAME} v{settings.APP_VERSION}",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for router in (simulate, estimate, forecast, cv, reproduce):
        router.register(subparsers)
    return parser


def report(error: str, message: str, details: dict) -> None:
    """Error estructurado en stderr"""
    payload = {"error": error, "message": message, "details": details}
    print(json.dumps(payload, ensure_ascii=False, default=str), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    # Overrides de entorno desde la línea de comandos
    if getattr(args, "threads", None):
        settings.MAX_THREADS = args.threads

    start_time = time.time()
    logger.info(f"→ {args.command}")
    try:
        code = args.handler(args)
    except BaseAppException as exc:
        logger.error(f"❌ {exc.__class__.__name__}: {exc.message}")
        report(exc.__class__.__name__, exc.message, exc.details)
        return exc.exit_code
    except ValidationError as exc:
        logger.error(f"❌ Configuración inválida: {exc.error_count()} errores")
        details = {"errors": [
            {"field": ".".join(str(part) for part in error["loc"]), "message": error["msg"]}
            for error in exc.errors()
        ]}
        report(ConfigException.__name__, "Configuración inválida", details)
        return ConfigException.exit_code

    logger.info(f"← {args.command} ({time.time() - start_time:.3f}s)")
    return code


if __name__ == "__main__":
    sys.exit(main())
