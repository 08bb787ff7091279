"""
Schemas de las extensiones del modelo

- OperatorTransferEstimate / OperatorFilterSet: respuesta funcional,
  la transferencia es un operador p x p por frecuencia
- JointSpectralEstimate: dos regresores (uno disperso, uno denso)
- JointTransferEstimate: b1(ω), b2(ω) del modelo conjunto
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.grids import SpatialGrid
from app.schemas.regression import RegularizationMethod
from app.schemas.spectral import CrossSpectralEstimate, EigenSystem, SpectralDensityEstimate


# ==================== RESPUESTA FUNCIONAL ====================

class OperatorTransferEstimate(BaseModel):
    """
    B̂_ω(z, x): complejo (n_freq, p, p)

    El primer eje espacial es la ubicación de la respuesta, el segundo la
    del regresor.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    method: RegularizationMethod
    param: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 3:
            raise ValueError("values debe ser (n_freq, p, p)")
        self.values.flags.writeable = False
        return self


class OperatorFilterSet(BaseModel):
    """Núcleos B_k(z, x), k = -M..M; values[i] corresponde al lag i - M"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    M: int = Field(..., ge=0)
    values: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 3 or self.values.shape[0] != 2 * self.M + 1:
            raise ValueError("values debe ser (2M+1, p, p)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("núcleos de filtro no finitos")
        self.values.flags.writeable = False
        return self

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def at(self, k: int) -> np.ndarray:
        if abs(k) > self.M:
            return np.zeros(self.values.shape[1:])
        return self.values[k + self.M]

    def norms(self, quad_weight: float) -> np.ndarray:
        """Norma de Hilbert-Schmidt de cada núcleo"""
        return quad_weight * np.sqrt(np.sum(self.values ** 2, axis=(1, 2)))

    def trimmed(self, M: int) -> "OperatorFilterSet":
        if M >= self.M:
            return self
        return OperatorFilterSet(M=M, values=self.values[self.M - M:self.M + M + 1].copy())


# ==================== MODELO CONJUNTO ====================

class JointSpectralEstimate(BaseModel):
    """
    Segundo orden conjunto de (X¹ disperso, X² denso) y su cruce con Z

    F12[m](x, y) = densidad cruzada de X¹(x) con X²(y); F21 = F12^H.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    F11: SpectralDensityEstimate
    F22: SpectralDensityEstimate
    F12: np.ndarray
    Fz1: CrossSpectralEstimate
    Fz2: CrossSpectralEstimate
    eig1: EigenSystem
    eig2: EigenSystem
    grid: SpatialGrid
    mu1: Optional[np.ndarray] = None
    mu2: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check(self):
        if self.F12.shape != self.F11.values.shape:
            raise ValueError("F12 debe tener la misma shape que F11")
        self.F12.flags.writeable = False
        return self

    @property
    def F21(self) -> np.ndarray:
        return np.conj(np.swapaxes(self.F12, -1, -2))

    def gamma(self) -> np.ndarray:
        """γ̂_ij^ω = ⟨F12 ψ_j, φ_i⟩ = w² φ_i^H F12 ψ_j, shape (n_freq, p, p)"""
        w = self.grid.quad_weight
        return w * w * np.einsum(
            "mxi,mxy,myj->mij", np.conj(self.eig1.eigenvectors), self.F12, self.eig2.eigenvectors
        )


class JointTransferEstimate(BaseModel):
    """b1(ω), b2(ω): complejos (n_freq, p) cada uno"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values1: np.ndarray
    values2: np.ndarray
    method: RegularizationMethod

    @model_validator(mode="after")
    def _check(self):
        if self.values1.ndim != 2 or self.values1.shape != self.values2.shape:
            raise ValueError("b1 y b2 deben ser (n_freq, p)")
        self.values1.flags.writeable = False
        self.values2.flags.writeable = False
        return self
