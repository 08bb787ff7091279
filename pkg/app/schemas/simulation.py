"""
Schemas de la simulación

- SimConfig: un escenario (proceso, esquema de regresión, forma, tamaños)
- GroundTruth: cantidades verdaderas para el oráculo y las métricas
"""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.regression import FilterSet
from app.schemas.spectral import AutocovSequence


class ProcessType(str, Enum):
    """Dinámica del regresor funcional"""
    FAR1 = "far1"
    FMA4 = "fma4"


class RegressionScheme(str, Enum):
    """Lags no nulos de los filtros verdaderos"""
    REG1 = "reg1"
    REG2 = "reg2"
    REG3 = "reg3"


class FilterShape(str, Enum):
    """β_A(x) = cos(4πx), β_B(x) = sin(2πx)"""
    A = "a"
    B = "b"


class SimConfig(BaseModel):
    """
    Configuración de un escenario de simulación

    N_max = None representa el régimen completamente observado.
    """
    model_config = ConfigDict(frozen=True)

    process: ProcessType = ProcessType.FAR1
    T: int = Field(300, ge=50)
    N_max: Optional[int] = Field(40, ge=0)
    scheme: RegressionScheme = RegressionScheme.REG1
    shape: FilterShape = FilterShape.B
    snr: float = Field(20.0, gt=0)
    tau2: float = Field(0.001, gt=0)
    seed: int = Field(0, ge=0)
    basis_dim: int = Field(21, ge=1)
    p: int = Field(51, ge=2)

    @property
    def dense(self) -> bool:
        return self.N_max is None


class GroundTruth(BaseModel):
    """
    Verdad del generador

    latent[i] = X_t con t = first_time + i (incluye curvas previas a t = 1
    necesarias para la respuesta).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    R: AutocovSequence
    sigma2: float = Field(..., gt=0)
    filters: FilterSet
    latent: np.ndarray
    first_time: int
    var_z: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check(self):
        R0 = self.R.at(0)
        if not np.allclose(R0, R0.T, atol=1e-10):
            raise ValueError("R_0 verdadero no simétrico")
        self.latent.flags.writeable = False
        return self

    def curves(self, first: int, last: int) -> np.ndarray:
        """X_t para t = first..last"""
        return self.latent[first - self.first_time:last - self.first_time + 1]
