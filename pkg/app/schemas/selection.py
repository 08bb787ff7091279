"""
Schemas de selección de modelo

- CVPlan: folds, grillas de candidatos y partición holdout
- CVTrace: score por candidato (se emite como CSV)
- RegressorFit: lo estimado sobre el regresor, compartido por todos
  los candidatos del holdout
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.schemas.forecast import PredictedCurves
from app.schemas.grids import FrequencyGrid, NoiseEstimate, SpatialGrid
from app.schemas.spectral import AutocovSequence, EigenSystem, SpectralDensityEstimate


def default_bandwidths() -> List[float]:
    return np.logspace(np.log10(0.05), np.log10(0.6), 8).tolist()


def default_fractions() -> List[float]:
    return np.logspace(-4, np.log10(0.5), 12).tolist()


class CVPlan(BaseModel):
    """
    Plan de validación cruzada

    reg_fractions: candidatos de υ/ρ como fracciones de sup_ω λ̂_1^ω.
    """
    model_config = ConfigDict(frozen=True)

    folds: int = Field(5, ge=2)
    bandwidths_R: List[float] = Field(default_factory=default_bandwidths)
    bandwidths_V: List[float] = Field(default_factory=default_bandwidths)
    bandwidths_C: List[float] = Field(default_factory=default_bandwidths)
    holdout_fraction: float = Field(0.2, gt=0, lt=1)
    reg_fractions: List[float] = Field(default_factory=default_fractions)
    seed: int = Field(0, ge=0)

    @field_validator("bandwidths_R", "bandwidths_V", "bandwidths_C", "reg_fractions")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("la grilla de candidatos no puede estar vacía")
        if any(not v > 0 for v in values):
            raise ValueError("los candidatos deben ser positivos")
        return values

    def split(self, T: int) -> int:
        """S = ⌊(1 - holdout) T⌋"""
        return int(np.floor((1.0 - self.holdout_fraction) * T))


class CVTrace(BaseModel):
    """Una fila de traza: candidato, fold (-1 = promedio / holdout) y score"""
    model_config = ConfigDict(frozen=True)

    parameter: str
    candidate: float
    fold: int
    score: float


class RegressorFit(BaseModel):
    """Estimaciones del regresor reutilizadas por los candidatos de υ/ρ"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpatialGrid
    fgrid: FrequencyGrid
    L: int
    B_R: Optional[float] = None
    spectral: SpectralDensityEstimate
    eig: EigenSystem
    R: AutocovSequence
    sigma2: Optional[NoiseEstimate] = None
    curves: PredictedCurves
