"""
Schemas del segundo orden estimado

- RawCovariances: productos crudos por lag (se generan bajo demanda)
- CovSurfaceEstimate: superficie suavizada de lag 0
- SpectralDensityEstimate / CrossSpectralEstimate: valores por frecuencia
- AutocovSequence: R_h reales obtenidos por inversión
- EigenSystem: descomposición armónica por frecuencia
"""

from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.data import SparseFTS
from app.schemas.grids import FrequencyGrid, SpatialGrid


def _readonly(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.flags.writeable = False


# ==================== CRUDOS ====================

class RawCovariances(BaseModel):
    """
    Productos G_{h,t}(x_{t+h,j}, x_{tk}) = Y_{t+h,j} Y_{tk} para |h| <= L

    Los pares no se materializan al construir: `pairs(h)` los genera
    cuando un consumidor los necesita (los estimadores principales usan
    sumas separables por tiempo y nunca los piden).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: SparseFTS
    L: int = Field(..., ge=0)

    def pair_count(self, h: int) -> int:
        """Cantidad de pares en el lag h (lag 0 sin j = k)"""
        counts = self.data.counts
        h = abs(h)
        T = self.data.T
        if h >= T:
            return 0
        total = int(np.dot(counts[h:], counts[:T - h]))
        if h == 0:
            total -= int(counts.sum())
        return total

    def pair_counts(self) -> Dict[int, int]:
        return {h: self.pair_count(h) for h in range(-self.L, self.L + 1)}

    def pairs(self, h: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Pares del lag h

        Returns:
            (u, v, g, t): u = ubicación en t+h, v = ubicación en t,
            g = producto, t = tiempo del segundo factor (1-based)
        """
        if h < 0:
            u, v, g, t = self.pairs(-h)
            return v, u, g, t - h

        data = self.data
        offsets = data.offsets()
        first, second, times = [], [], []
        for t in range(1, data.T - h + 1):
            a = np.arange(offsets[t + h - 1], offsets[t + h])
            b = np.arange(offsets[t - 1], offsets[t])
            if a.size == 0 or b.size == 0:
                continue
            aa, bb = np.meshgrid(a, b, indexing="ij")
            aa, bb = aa.ravel(), bb.ravel()
            if h == 0:
                keep = aa != bb
                aa, bb = aa[keep], bb[keep]
            first.append(aa)
            second.append(bb)
            times.append(np.full(aa.size, t))

        if not first:
            empty = np.empty(0)
            return empty, empty, empty, np.empty(0, dtype=int)

        ia = np.concatenate(first)
        ib = np.concatenate(second)
        return data.x[ia], data.x[ib], data.y[ia] * data.y[ib], np.concatenate(times)


# ==================== SUPERFICIES ====================

class CovSurfaceEstimate(BaseModel):
    """R̂_0 en la grilla (simetrizada)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    bandwidth: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("superficie con valores no finitos")
        _readonly(self.values)
        return self


# ==================== ESPECTRALES ====================

class SpectralDensityEstimate(BaseModel):
    """
    F̂_ω(x, y) para cada ω de la grilla de frecuencias

    values: complejo (n_freq, p, p), hermítico por frecuencia y con
    values[-ω] = conj(values[ω]).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    L: int = Field(..., ge=1)
    bandwidth: Optional[float] = Field(None, gt=0)
    grid: SpatialGrid
    fgrid: FrequencyGrid

    @model_validator(mode="after")
    def _check(self):
        expected = (self.fgrid.n_freq, self.grid.p, self.grid.p)
        if self.values.shape != expected:
            raise ValueError(f"values debe tener shape {expected}")
        _readonly(self.values)
        return self


class CrossSpectralEstimate(BaseModel):
    """
    f̂^{ZX}_ω(x): complejo (n_freq, p)

    Con respuesta funcional los valores son (n_freq, p, p): el primer eje
    espacial es la ubicación de la respuesta.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    L: int = Field(..., ge=1)
    bandwidth: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim not in (2, 3):
            raise ValueError("values debe ser (n_freq, p) o (n_freq, p, p)")
        _readonly(self.values)
        return self


class AutocovSequence(BaseModel):
    """
    R_h(x, y) = E[X_{t+h}(x) X_t(y)] para |h| <= max_lag

    values[i] corresponde al lag i - max_lag; fuera del rango R_h = 0.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 3 or self.values.shape[0] % 2 != 1:
            raise ValueError("values debe ser (2H+1, p, p)")
        _readonly(self.values)
        return self

    @classmethod
    def from_nonnegative(cls, positive: np.ndarray) -> "AutocovSequence":
        """Construir desde R_0..R_H completando R_{-h} = R_h^T"""
        negative = np.transpose(positive[:0:-1], (0, 2, 1))
        return cls(values=np.concatenate([negative, positive], axis=0).copy())

    @property
    def max_lag(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    def at(self, h: int) -> np.ndarray:
        if abs(h) > self.max_lag:
            return np.zeros((self.p, self.p))
        return self.values[h + self.max_lag]

    def truncated(self, max_lag: int) -> "AutocovSequence":
        """Conservar sólo |h| <= max_lag"""
        if max_lag >= self.max_lag:
            return self
        center = self.max_lag
        return AutocovSequence(values=self.values[center - max_lag:center + max_lag + 1].copy())


class EigenSystem(BaseModel):
    """
    Autovalores (n_freq, p) descendentes y autofunciones (n_freq, p, p)

    eigenvectors[m][:, j] es φ_j en la frecuencia m, con
    quad_weight · φ_i^H φ_j = δ_ij.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.eigenvalues.ndim != 2 or self.eigenvectors.ndim != 3:
            raise ValueError("shapes inválidas para el sistema propio")
        _readonly(self.eigenvalues, self.eigenvectors)
        return self

    @property
    def leading(self) -> float:
        """sup_ω λ̂_1^ω"""
        return float(np.max(self.eigenvalues[:, 0]))
