"""
Piezas compartidas por los subcomandos

- Flags que reflejan los campos de RunConfig
- Carga de entradas, ejecución del pipeline y escritura de artefactos

Todos los artefactos de una corrida quedan en un directorio:
manifest.json, spectral.csv, cross_spectral.csv, filters.csv,
forecasts.csv, autocov.csv, cv_*.csv y metrics.json
"""

from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging

from app.adapters.csv_adapter import CsvAdapter
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.run import PipelineResult, RunConfig
from app.services.pipeline_service import PipelineService

logger = logging.getLogger(__name__)

TRACE_FILES = {
    "bandwidths": "cv_bandwidths.csv",
    "cross": "cv_cross.csv",
    "regularization": "cv_regularization.csv",
}

# Flags de la línea de comandos → campos de RunConfig
CONFIG_FIELDS = [
    "regressor", "response", "regressor_dense", "regressor2", "response_sparse",
    "p", "n_freq", "L", "B_R", "B_V", "B_C", "method", "param", "param2",
    "M", "window", "seed", "center", "folds", "holdout", "threads", "output",
]


# ==================== FLAGS ====================

def tunable(text: str) -> Union[float, str]:
    return "cv" if text == "cv" else float(text)


def int_or_word(text: str) -> Union[int, str]:
    return text if text in ("auto", "full") else int(text)


def add_model_arguments(parser: ArgumentParser) -> None:
    """Flags de estimación (todas opcionales; los defaults viven en RunConfig)"""
    group = parser.add_argument_group("modelo")
    group.add_argument("--p", type=int, help="Puntos de la grilla espacial")
    group.add_argument("--n-freq", dest="n_freq", type=int, help="Frecuencias en (-π, π]")
    group.add_argument("--L", type=int, help="Span de Bartlett (default ⌊2 T^{1/3}⌋)")
    group.add_argument("--B-R", dest="B_R", type=tunable, help="Ancho de superficie o 'cv'")
    group.add_argument("--B-V", dest="B_V", type=tunable, help="Ancho de la diagonal ruidosa o 'cv'")
    group.add_argument("--B-C", dest="B_C", type=tunable, help="Ancho cruzado o 'cv'")
    group.add_argument("--method", choices=["trunc", "tikh"], help="Regularización")
    group.add_argument("--param", type=tunable, help="υ (trunc) o ρ (tikh), o 'cv'")
    group.add_argument("--param2", type=float, help="Parámetro del segundo regresor (modelo conjunto)")
    group.add_argument("--M", type=int_or_word, help="Lags del filtro o 'auto'")
    group.add_argument("--window", type=int_or_word, help="Ventana del BLUP: entero, 'auto' o 'full'")
    group.add_argument("--center", action="store_true", default=None, help="Centrar regresor y respuesta")
    group.add_argument("--folds", type=int, help="Folds de la validación cruzada")
    group.add_argument("--holdout", type=float, help="Fracción final reservada para elegir υ/ρ")
    add_run_arguments(parser)


def add_input_arguments(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("entradas")
    group.add_argument("--regressor", required=True, help="CSV t,x,y del regresor funcional")
    group.add_argument("--response", required=True, help="CSV t,z (o t,x,y con --response-sparse)")
    group.add_argument("--regressor-dense", dest="regressor_dense", action="store_true", default=None,
                       help="El regresor está completamente observado en una grilla común")
    group.add_argument("--regressor2", help="CSV t,x,y de un segundo regresor denso (modelo conjunto)")
    group.add_argument("--response-sparse", dest="response_sparse", action="store_true", default=None,
                       help="La respuesta es funcional y dispersa")


def add_run_arguments(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("corrida")
    group.add_argument("--seed", type=int, help="Semilla única de la corrida")
    group.add_argument("--threads", type=int, help="Máximo de hilos (env MAX_THREADS)")
    group.add_argument("--output", help="Directorio de salida (env OUTPUT_DIR)")


def config_from_args(args: Namespace, command: str, **overrides: Any) -> RunConfig:
    """RunConfig con los flags presentes; lo ausente toma el default"""
    values = {
        name: getattr(args, name)
        for name in CONFIG_FIELDS
        if getattr(args, name, None) is not None
    }
    values.update(overrides)
    return RunConfig(command=command, **values)


# ==================== ENTRADAS ====================

def load_inputs(cfg: RunConfig):
    """(regresor, respuesta, segundo regresor o None) según la configuración"""
    grid, _ = cfg.grids()
    if cfg.regressor_dense:
        dataX: Union[SparseFTS, DenseFTS] = CsvAdapter.ingest_dense_csv(cfg.regressor, grid)
    else:
        dataX = CsvAdapter.ingest_sparse_csv(cfg.regressor)
    if cfg.response_sparse:
        dataZ: Union[ScalarTS, SparseFTS] = CsvAdapter.ingest_sparse_csv(cfg.response)
    else:
        dataZ = CsvAdapter.ingest_scalar_csv(cfg.response)
    dataX2 = CsvAdapter.ingest_dense_csv(cfg.regressor2, grid) if cfg.regressor2 else None
    return padded_to(dataX, dataZ.T), padded_to(dataZ, dataX.T), dataX2


def padded_to(data, T: int):
    """
    Serie dispersa extendida hasta T con curvas vacías

    En t,x,y el largo es el máximo t observado, así que los últimos
    tiempos sin observaciones no aparecen en el archivo.
    """
    if not isinstance(data, SparseFTS) or data.T >= T:
        return data
    logger.info(f"🔄 Serie dispersa extendida de T={data.T} a T={T} (tiempos finales sin observaciones)")
    return SparseFTS(T=T, t=data.t, x=data.x, y=data.y)


# ==================== SALIDAS ====================

def manifest(result: PipelineResult, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    payload = {
        "config": result.config.model_dump(mode="json"),
        "resolved": result.resolved,
        "L": result.L,
        "seed": result.config.seed,
        "versions": CsvAdapter.versions(),
    }
    payload.update(extra or {})
    return payload


def write_artifacts(
    result: PipelineResult,
    out: Union[str, Path],
    extra_manifest: Optional[Dict[str, Any]] = None
) -> Path:
    """Escribir todos los artefactos de `result` en `out`"""
    out = Path(out)
    grid, fgrid = result.grid, result.fgrid
    CsvAdapter.write_json(manifest(result, extra_manifest), out / "manifest.json")
    CsvAdapter.write_spectral(result.spectral.values, fgrid, grid, out / "spectral.csv")
    CsvAdapter.write_cross_spectral(result.cross.values, fgrid, grid, out / "cross_spectral.csv")
    if result.operator_filters is not None:
        CsvAdapter.write_filters(result.operator_filters, grid, out / "filters.csv")
    else:
        CsvAdapter.write_filters(result.filters, grid, out / "filters.csv")
    if result.filters2 is not None:
        CsvAdapter.write_filters(result.filters2, grid, out / "filters2.csv")
    CsvAdapter.write_forecasts(result.forecast, grid, out / "forecasts.csv")
    if result.R is not None:
        CsvAdapter.write_autocov(result.R, grid, out / "autocov.csv")
    for key, traces in result.traces.items():
        if traces:
            CsvAdapter.write_traces(traces, out / TRACE_FILES[key])
    CsvAdapter.write_json(result.metrics, out / "metrics.json")
    logger.info(f"✅ Artefactos escritos en {out}")
    return out


def run_pipeline(cfg: RunConfig, extra_manifest: Optional[Dict[str, Any]] = None) -> PipelineResult:
    """Cargar entradas, estimar y escribir artefactos en cfg.output"""
    dataX, dataZ, dataX2 = load_inputs(cfg)
    result = PipelineService.estimate(dataX, dataZ, cfg, dataX2)
    write_artifacts(result, cfg.output, extra_manifest)
    return result
