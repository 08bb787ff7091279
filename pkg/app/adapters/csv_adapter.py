"""
CsvAdapter - Lectura y escritura de tablas CSV / JSON

Responsabilidad ÚNICA:
- Conocer los formatos de archivo (t,x,y / t,z / tablas de resultados)
- Transformar a los schemas internos y de vuelta
- NO conoce lógica de estimación
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Union
import json
import logging
import platform

import numpy as np
import pandas as pd
import pydantic
import scipy

from app.core.config import get_settings
from app.core.exceptions import (
    DataException,
    DomainException,
    EmptyDataException,
    InsufficientDataException,
    ParseException,
)
from app.schemas.data import DenseFTS, ScalarTS, SparseFTS
from app.schemas.extensions import OperatorFilterSet
from app.schemas.forecast import ForecastResult
from app.schemas.grids import FrequencyGrid, SpatialGrid
from app.schemas.regression import FilterSet
from app.schemas.run import ReplicationRow
from app.schemas.selection import CVTrace
from app.schemas.spectral import AutocovSequence

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


class CsvAdapter:
    """Adapter para los archivos de entrada y los artefactos de salida"""

    # ==================== LECTURA ====================

    @staticmethod
    def _read_table(path: PathLike, columns: List[str]) -> pd.DataFrame:
        """CSV como texto, con encabezado exacto; las filas de datos empiezan en la línea 2"""
        path = str(path)
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise EmptyDataException(message=f"Archivo vacío: {path}", details={"path": path})
        except UnicodeDecodeError as exc:
            raise ParseException(path=path, line=0, reason=f"no es UTF-8 ({exc.reason})")
        except pd.errors.ParserError as exc:
            raise ParseException(path=path, line=0, reason=str(exc))

        header = [c.strip() for c in frame.columns]
        if header != columns:
            raise ParseException(path=path, line=1, reason=f"encabezado esperado {','.join(columns)}, recibido {','.join(header)}")
        frame.columns = columns
        if frame.empty:
            raise EmptyDataException(message=f"Archivo sin filas de datos: {path}", details={"path": path})
        return frame

    @staticmethod
    def _numeric(frame: pd.DataFrame, column: str, path: str, allow_blank: bool = False) -> np.ndarray:
        text = frame[column].str.strip()
        values = pd.to_numeric(text, errors="coerce").to_numpy(dtype=float)
        invalid = np.isnan(values) & ~(allow_blank & (text == "")).to_numpy()
        if invalid.any():
            row = int(np.flatnonzero(invalid)[0])
            raise ParseException(path=path, line=row + 2, reason=f"{column}='{frame[column].iloc[row]}' no es numérico")
        return values

    @staticmethod
    def _times(frame: pd.DataFrame, path: str) -> np.ndarray:
        t = CsvAdapter._numeric(frame, "t", path)
        bad = (t < 1) | (t != np.floor(t))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ParseException(path=path, line=row + 2, reason=f"t='{frame['t'].iloc[row]}' no es un entero positivo")
        return t.astype(int)

    @staticmethod
    def ingest_sparse_csv(path: PathLike) -> SparseFTS:
        """
        Encabezado `t,x,y`; T = max t, los tiempos ausentes tienen N_t = 0

        Raises:
            ParseException (con número de línea), DomainException para x fuera
            de [0, 1] o y no finito, EmptyDataException sin filas
        """
        path = str(path)
        frame = CsvAdapter._read_table(path, ["t", "x", "y"])
        t = CsvAdapter._times(frame, path)
        x = CsvAdapter._numeric(frame, "x", path)
        y = CsvAdapter._numeric(frame, "y", path)

        outside = (x < 0.0) | (x > 1.0)
        if outside.any():
            row = int(np.flatnonzero(outside)[0])
            raise DomainException(path=path, line=row + 2, field="x", value=float(x[row]))
        infinite = ~np.isfinite(y)
        if infinite.any():
            row = int(np.flatnonzero(infinite)[0])
            raise DomainException(path=path, line=row + 2, field="y", value=float(y[row]))

        data = SparseFTS(T=int(t.max()), t=t, x=x, y=y)
        logger.info(f"✅ Leído {path}: T={data.T}, n={data.n_obs}")
        return data

    @staticmethod
    def ingest_scalar_csv(path: PathLike) -> ScalarTS:
        """
        Encabezado `t,z`; z vacío = faltante, t ausente = faltante

        Raises:
            ParseException, EmptyDataException, InsufficientDataException
        """
        path = str(path)
        frame = CsvAdapter._read_table(path, ["t", "z"])
        t = CsvAdapter._times(frame, path)
        z = CsvAdapter._numeric(frame, "z", path, allow_blank=True)

        duplicated = pd.Series(t).duplicated().to_numpy()
        if duplicated.any():
            row = int(np.flatnonzero(duplicated)[0])
            raise ParseException(path=path, line=row + 2, reason=f"t={t[row]} repetido")
        if np.any(np.isinf(z)):
            row = int(np.flatnonzero(np.isinf(z))[0])
            raise DomainException(path=path, line=row + 2, field="z", value=float(z[row]))

        series = np.full(int(t.max()), np.nan)
        series[t - 1] = z
        if int(np.sum(np.isfinite(series))) < 2:
            raise InsufficientDataException(
                message=f"{path} requiere al menos 2 valores observados",
                details={"path": path}
            )
        logger.info(f"✅ Leído {path}: T={series.size}, observados={int(np.isfinite(series).sum())}")
        return ScalarTS(z=series)

    @staticmethod
    def ingest_dense_csv(path: PathLike, grid: SpatialGrid) -> DenseFTS:
        """
        Serie densa en formato `t,x,y` con las mismas ubicaciones en cada t

        Las curvas se interpolan linealmente a la grilla si las ubicaciones
        no coinciden con ella.

        Raises:
            DataException si faltan tiempos o las ubicaciones difieren entre tiempos
        """
        data = CsvAdapter.ingest_sparse_csv(path)
        counts = data.counts
        if np.any(counts == 0) or np.any(counts != counts[0]) or counts[0] < 2:
            raise DataException(
                message=f"{path} no es una serie densa: cada t debe tener las mismas ubicaciones",
                details={"path": str(path)}
            )
        frame = pd.DataFrame({"t": data.t, "x": data.x, "y": data.y})
        table = frame.pivot_table(index="t", columns="x", values="y", aggfunc="first")
        if table.shape[1] != counts[0] or table.isna().to_numpy().any():
            raise DataException(
                message=f"{path} no es una serie densa: las ubicaciones difieren entre tiempos",
                details={"path": str(path)}
            )
        locations = table.columns.to_numpy(dtype=float)
        values = table.to_numpy(dtype=float)
        if locations.size == grid.p and np.allclose(locations, grid.points, atol=1e-12):
            curves = values
        else:
            curves = np.array([np.interp(grid.points, locations, row) for row in values])
        return DenseFTS(curves=curves)

    @staticmethod
    def read_filters(path: PathLike) -> FilterSet:
        """Leer filters.csv (k, x, b) con precisión completa"""
        frame = pd.read_csv(str(path), float_precision="round_trip")
        table = frame.pivot(index="k", columns="x", values="b").sort_index()
        M = int(table.index.max())
        return FilterSet(M=M, values=table.to_numpy(dtype=float))

    @staticmethod
    def read_json(path: PathLike) -> Dict[str, Any]:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    # ==================== ESCRITURA ====================

    @staticmethod
    def _write(frame: pd.DataFrame, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.debug(f"Escrito {path} ({len(frame)} filas)")
        return path

    @staticmethod
    def write_sparse_csv(data: SparseFTS, path: PathLike) -> Path:
        return CsvAdapter._write(pd.DataFrame({"t": data.t, "x": data.x, "y": data.y}), path)

    @staticmethod
    def write_dense_csv(data: DenseFTS, grid: SpatialGrid, path: PathLike) -> Path:
        t = np.repeat(np.arange(1, data.T + 1), data.p)
        x = np.tile(grid.points, data.T)
        return CsvAdapter._write(pd.DataFrame({"t": t, "x": x, "y": data.curves.ravel()}), path)

    @staticmethod
    def write_scalar_csv(data: ScalarTS, path: PathLike) -> Path:
        return CsvAdapter._write(pd.DataFrame({"t": np.arange(1, data.T + 1), "z": data.z}), path)

    @staticmethod
    def write_spectral(values: np.ndarray, fgrid: FrequencyGrid, grid: SpatialGrid, path: PathLike) -> Path:
        """(ω, x, y, re, im) para cada frecuencia y par de la grilla"""
        n, p = values.shape[0], grid.p
        omega, x, y = np.meshgrid(fgrid.omegas, grid.points, grid.points, indexing="ij")
        frame = pd.DataFrame({
            "omega": omega.ravel(),
            "x": x.ravel(),
            "y": y.ravel(),
            "re": values.real.reshape(n * p * p),
            "im": values.imag.reshape(n * p * p),
        })
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_cross_spectral(values: np.ndarray, fgrid: FrequencyGrid, grid: SpatialGrid, path: PathLike) -> Path:
        """(ω, x, re, im); con respuesta funcional (ω, z, x, re, im)"""
        if values.ndim == 3:
            omega, z, x = np.meshgrid(fgrid.omegas, grid.points, grid.points, indexing="ij")
            frame = pd.DataFrame({
                "omega": omega.ravel(), "z": z.ravel(), "x": x.ravel(),
                "re": values.real.ravel(), "im": values.imag.ravel(),
            })
        else:
            omega, x = np.meshgrid(fgrid.omegas, grid.points, indexing="ij")
            frame = pd.DataFrame({
                "omega": omega.ravel(), "x": x.ravel(),
                "re": values.real.ravel(), "im": values.imag.ravel(),
            })
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_filters(filters: Union[FilterSet, OperatorFilterSet], grid: SpatialGrid, path: PathLike) -> Path:
        """(k, x, b) o, para núcleos de operador, (k, z, x, b)"""
        if isinstance(filters, OperatorFilterSet):
            k, z, x = np.meshgrid(filters.lags, grid.points, grid.points, indexing="ij")
            frame = pd.DataFrame({"k": k.ravel(), "z": z.ravel(), "x": x.ravel(), "b": filters.values.ravel()})
        else:
            k, x = np.meshgrid(filters.lags, grid.points, indexing="ij")
            frame = pd.DataFrame({"k": k.ravel(), "x": x.ravel(), "b": filters.values.ravel()})
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_forecasts(result: ForecastResult, grid: SpatialGrid, path: PathLike) -> Path:
        """(t, z_hat); con respuesta funcional (t, z, z_hat)"""
        if result.z_hat.ndim == 2:
            t, z = np.meshgrid(result.times, grid.points, indexing="ij")
            frame = pd.DataFrame({"t": t.ravel(), "z": z.ravel(), "z_hat": result.z_hat.ravel()})
        else:
            frame = pd.DataFrame({"t": result.times, "z_hat": result.z_hat})
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_autocov(R: AutocovSequence, grid: SpatialGrid, path: PathLike) -> Path:
        """(h, x, y, value) para h = 0..max_lag"""
        lags = np.arange(0, R.max_lag + 1)
        h, x, y = np.meshgrid(lags, grid.points, grid.points, indexing="ij")
        values = np.stack([R.at(int(lag)) for lag in lags])
        frame = pd.DataFrame({"h": h.ravel(), "x": x.ravel(), "y": y.ravel(), "value": values.ravel()})
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_traces(traces: Iterable[CVTrace], path: PathLike) -> Path:
        rows = [trace.model_dump() for trace in traces]
        frame = pd.DataFrame(rows, columns=["parameter", "candidate", "fold", "score"])
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_replications(rows: Iterable[ReplicationRow], path: PathLike) -> Path:
        frame = pd.DataFrame([row.model_dump() for row in rows], columns=list(ReplicationRow.model_fields))
        return CsvAdapter._write(frame, path)

    @staticmethod
    def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
            handle.write("\n")
        return path

    @staticmethod
    def versions() -> Dict[str, str]:
        settings = get_settings()
        return {
            "app": settings.APP_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "pydantic": pydantic.VERSION,
        }


def _json_default(value: Any):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"No serializable: {type(value).__name__}")
