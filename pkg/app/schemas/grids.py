"""
Schemas para grillas espaciales, de frecuencia y pesos de Bartlett

Principio: Tipos inmutables compartidos por todos los estimadores
"""

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.kernels import bartlett_weight


# ==================== GRILLA ESPACIAL ====================

class SpatialGrid(BaseModel):
    """
    Grilla equiespaciada {0, 1/(p-1), ..., 1} con cuadratura de Riemann 1/p

    Los operadores se representan como matrices kernel; aplicar un operador
    es matriz · vector · quad_weight.
    """
    model_config = ConfigDict(frozen=True)

    p: int = Field(51, ge=2)

    @property
    def points(self) -> np.ndarray:
        points = np.linspace(0.0, 1.0, self.p)
        points.flags.writeable = False
        return points

    @property
    def quad_weight(self) -> float:
        return 1.0 / self.p

    def inner(self, a: np.ndarray, b: np.ndarray):
        """Pareo bilineal ∫ a(x) b(x) dx (sin conjugar); opera sobre el último eje"""
        return self.quad_weight * np.sum(a * b, axis=-1)

    def quad_trace(self, kernel: np.ndarray):
        """∫ K(x, x) dx"""
        return self.quad_weight * np.trace(kernel, axis1=-2, axis2=-1)


# ==================== GRILLA DE FRECUENCIAS ====================

class FrequencyGrid(BaseModel):
    """
    Frecuencias equiespaciadas en [-pi, pi) con paso 2pi/n_freq

    Las exponenciales se construyen desde una tabla con entradas espejo
    exactas, así f(-w) = conj(f(w)) se cumple bit a bit.
    """
    model_config = ConfigDict(frozen=True)

    n_freq: int = Field(512, ge=3)

    @property
    def omegas(self) -> np.ndarray:
        omegas = -np.pi + 2.0 * np.pi * np.arange(self.n_freq) / self.n_freq
        omegas.flags.writeable = False
        return omegas

    @property
    def step(self) -> float:
        return 2.0 * np.pi / self.n_freq

    @property
    def phase_table(self) -> np.ndarray:
        n = self.n_freq
        k = np.arange(n)
        table = np.exp(-2j * np.pi * k / n)
        half = (n - 1) // 2
        table[n - np.arange(1, half + 1)] = np.conj(table[1:half + 1])
        table[0] = 1.0
        if n % 2 == 0:
            table[n // 2] = -1.0
        table.flags.writeable = False
        return table

    def exponentials(self, lags: Sequence[int]) -> np.ndarray:
        """
        e^{-i h w} para cada lag h y cada frecuencia w

        Returns:
            Array complejo (len(lags), n_freq)
        """
        lags = np.asarray(lags, dtype=int)
        m = np.arange(self.n_freq)
        index = np.mod(lags[:, None] * m[None, :], self.n_freq)
        sign = np.where(lags % 2 == 0, 1.0, -1.0)[:, None]
        return sign * self.phase_table[index]

    @property
    def mirror_index(self) -> np.ndarray:
        """Índice de -w para cada w de la grilla"""
        mirror = np.mod(self.n_freq - np.arange(self.n_freq), self.n_freq)
        mirror.flags.writeable = False
        return mirror

    @property
    def half_indices(self) -> np.ndarray:
        """Frecuencias w <= 0 (el resto se obtiene por conjugación)"""
        return np.arange(self.n_freq // 2 + 1)

    def riemann(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """Suma de Riemann de ∫_{-pi}^{pi} sobre el eje de frecuencias"""
        return self.step * np.sum(values, axis=axis)


# ==================== BARTLETT ====================

class BartlettWeights(BaseModel):
    """Pesos triangulares W_h = 1 - |h|/L para |h| < L"""
    model_config = ConfigDict(frozen=True)

    L: int = Field(..., ge=1)

    @property
    def lags(self) -> np.ndarray:
        """Lags -L..L (W_{±L} = 0)"""
        return np.arange(-self.L, self.L + 1)

    @property
    def W(self) -> np.ndarray:
        return np.array([bartlett_weight(self.L, int(h)) for h in self.lags])

    def weight(self, h: int) -> float:
        return bartlett_weight(self.L, h)


class NoiseEstimate(BaseModel):
    """Varianza estimada del error de medición"""
    model_config = ConfigDict(frozen=True)

    sigma2: float

    @field_validator("sigma2")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("sigma2 debe ser positivo")
        return value
