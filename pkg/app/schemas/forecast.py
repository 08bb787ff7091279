"""
Schemas del pronóstico

- StackedModel: todo lo necesario para el BLUP de las curvas latentes
- PredictedCurves: Π̂(X_t | 𝕐) en la grilla para un rango de tiempos
- ForecastResult: curvas predichas + respuestas pronosticadas
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import MissingCurveException
from app.schemas.data import SparseFTS
from app.schemas.grids import NoiseEstimate, SpatialGrid
from app.schemas.spectral import AutocovSequence


class StackedModel(BaseModel):
    """
    Estructura de evaluación del BLUP

    window: semiancho de condicionamiento en unidades de tiempo;
    None = solución exacta con todas las observaciones.
    interpolation: filas l_i tales que X(x_i) ≈ l_i · X(grilla).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: SparseFTS
    R: AutocovSequence
    sigma2: NoiseEstimate
    grid: SpatialGrid
    window: Optional[int] = Field(None, ge=0)
    interpolation: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.interpolation.shape != (self.data.n_obs, self.grid.p):
            raise ValueError("interpolation debe ser (n_obs, p)")
        if self.R.p != self.grid.p:
            raise ValueError("R y la grilla tienen distinto p")
        self.interpolation.flags.writeable = False
        return self


class PredictedCurves(BaseModel):
    """values[i] = Π̂(X_t | 𝕐) con t = first_time + i"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    first_time: int

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2:
            raise ValueError("values debe ser (n_tiempos, p)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curvas predichas no finitas")
        self.values.flags.writeable = False
        return self

    @classmethod
    def mean_padded(cls, curves: np.ndarray, pad: int, fill: Optional[np.ndarray] = None) -> "PredictedCurves":
        """
        Curvas observadas t = 1..T extendidas con `fill` (por defecto 0)
        en t = 1 - pad..0 y T + 1..T + pad
        """
        T, p = curves.shape
        fill = np.zeros(p) if fill is None else np.asarray(fill, dtype=float)
        values = np.tile(fill, (T + 2 * pad, 1))
        values[pad:pad + T] = curves
        return cls(values=values, first_time=1 - pad)

    @property
    def last_time(self) -> int:
        return self.first_time + self.values.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.first_time, self.last_time + 1)

    def at(self, t: int) -> np.ndarray:
        if t < self.first_time or t > self.last_time:
            raise MissingCurveException(t=t)
        return self.values[t - self.first_time]

    def window(self, first: int, last: int) -> np.ndarray:
        """Curvas para t = first..last (inclusive)"""
        if first < self.first_time:
            raise MissingCurveException(t=first)
        if last > self.last_time:
            raise MissingCurveException(t=last)
        return self.values[first - self.first_time:last - self.first_time + 1]


class ForecastResult(BaseModel):
    """Respuestas Ẑ_s para s en `times`, con las curvas usadas"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    curves: PredictedCurves
    times: np.ndarray
    z_hat: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.times.shape[0] != self.z_hat.shape[0]:
            raise ValueError("times y z_hat deben tener la misma longitud")
        if not np.all(np.isfinite(self.z_hat)):
            raise ValueError("pronósticos no finitos")
        self.z_hat.flags.writeable = False
        return self
