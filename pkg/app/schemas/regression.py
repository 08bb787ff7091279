"""
Schemas de la regresión en frecuencia

- TransferEstimate: representante de Riesz de B̂_ω por frecuencia
- FilterSet: coeficientes b_k reales en la grilla para |k| <= M
"""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class RegularizationMethod(str, Enum):
    """Regularización de la inversión de F̂^X_ω"""
    TRUNCATION = "trunc"
    TIKHONOV = "tikh"


class TransferEstimate(BaseModel):
    """b(ω): complejo (n_freq, p), con b(-ω) = conj(b(ω))"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    method: RegularizationMethod
    param: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2:
            raise ValueError("values debe ser (n_freq, p)")
        self.values.flags.writeable = False
        return self


class FilterSet(BaseModel):
    """
    Coeficientes b_k(x), k = -M..M

    values[i] corresponde al lag i - M.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    M: int = Field(..., ge=0)
    values: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2 or self.values.shape[0] != 2 * self.M + 1:
            raise ValueError("values debe ser (2M+1, p)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coeficientes de filtro no finitos")
        self.values.flags.writeable = False
        return self

    @classmethod
    def zeros(cls, M: int, p: int) -> "FilterSet":
        return cls(M=M, values=np.zeros((2 * M + 1, p)))

    @classmethod
    def from_lags(cls, coefficients: dict, M: int, p: int) -> "FilterSet":
        """Construir desde {k: b_k}; los lags ausentes son cero"""
        values = np.zeros((2 * M + 1, p))
        for k, b in coefficients.items():
            values[k + M] = b
        return cls(M=M, values=values)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    def at(self, k: int) -> np.ndarray:
        if abs(k) > self.M:
            return np.zeros(self.p)
        return self.values[k + self.M]

    def norms(self, quad_weight: float) -> np.ndarray:
        """‖b_k‖ en L² para cada lag"""
        return np.sqrt(quad_weight * np.sum(self.values ** 2, axis=1))

    def trimmed(self, M: int) -> "FilterSet":
        """Conservar sólo |k| <= M"""
        if M >= self.M:
            return self
        return FilterSet(M=M, values=self.values[self.M - M:self.M + M + 1].copy())

    def padded(self, M: int) -> "FilterSet":
        """Extender con ceros hasta |k| <= M"""
        if M <= self.M:
            return self
        values = np.zeros((2 * M + 1, self.p))
        values[M - self.M:M + self.M + 1] = self.values
        return FilterSet(M=M, values=values)
