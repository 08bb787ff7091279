"""
Schemas de ejecución

- RunConfig: todo lo que define una corrida (se valida antes de calcular)
- ReplicationRow: una fila del CSV de replicaciones
- PipelineResult: artefactos de una estimación completa
"""

from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import get_settings
from app.schemas.extensions import OperatorFilterSet
from app.schemas.forecast import ForecastResult
from app.schemas.grids import FrequencyGrid, SpatialGrid
from app.schemas.regression import FilterSet, RegularizationMethod
from app.schemas.selection import CVPlan, CVTrace, default_bandwidths
from app.schemas.simulation import SimConfig
from app.schemas.spectral import AutocovSequence, CrossSpectralEstimate, SpectralDensityEstimate

Tunable = Union[float, Literal["cv"]]


def _grid_points() -> int:
    return get_settings().GRID_POINTS


def _freq_points() -> int:
    return get_settings().FREQ_POINTS


class RunConfig(BaseModel):
    """
    Configuración resuelta de una corrida

    Los anchos de banda y el parámetro de regularización aceptan un valor
    fijo o "cv". window: "auto" (= L), "full" (BLUP exacto) o un entero.
    """
    model_config = ConfigDict(frozen=True)

    command: str = "estimate"
    regressor: Optional[str] = None
    response: Optional[str] = None
    regressor_dense: bool = False
    regressor2: Optional[str] = None
    response_sparse: bool = False

    p: int = Field(default_factory=_grid_points, ge=2)
    n_freq: int = Field(default_factory=_freq_points, ge=4)
    L: Optional[int] = Field(None, ge=1)

    B_R: Tunable = "cv"
    B_V: Tunable = "cv"
    B_C: Tunable = "cv"
    method: RegularizationMethod = RegularizationMethod.TRUNCATION
    param: Tunable = "cv"
    param2: Optional[float] = Field(None, gt=0)
    M: Union[int, Literal["auto"]] = "auto"
    window: Union[int, Literal["auto", "full"]] = "auto"

    seed: int = Field(0, ge=0)
    center: bool = False
    folds: int = Field(5, ge=2)
    holdout: float = Field(0.2, gt=0, lt=1)
    threads: Optional[int] = Field(None, ge=1)
    output: str = Field(default_factory=lambda: get_settings().OUTPUT_DIR)

    simulation: Optional[SimConfig] = None

    @field_validator("B_R", "B_V", "B_C", "param")
    @classmethod
    def _tunable(cls, value):
        if value != "cv" and not value > 0:
            raise ValueError("debe ser positivo o 'cv'")
        return value

    @field_validator("M", "window")
    @classmethod
    def _non_negative(cls, value):
        if isinstance(value, int) and value < 0:
            raise ValueError("debe ser no negativo")
        return value

    # ==================== DERIVADOS ====================

    def grids(self) -> tuple:
        return SpatialGrid(p=self.p), FrequencyGrid(n_freq=self.n_freq)

    def plan(self) -> CVPlan:
        """Plan de CV; un ancho fijo se convierte en grilla de un solo candidato"""
        def candidates(value: Tunable) -> List[float]:
            return default_bandwidths() if value == "cv" else [float(value)]

        return CVPlan(
            folds=self.folds,
            bandwidths_R=candidates(self.B_R),
            bandwidths_V=candidates(self.B_V),
            bandwidths_C=candidates(self.B_C),
            holdout_fraction=self.holdout,
            seed=self.seed,
        )

    def blup_window(self) -> Union[int, str, None]:
        """Ventana en el formato de ForecastService"""
        return None if self.window == "full" else self.window

    def pad(self) -> int:
        """Curvas BLUP extra a cada lado (cubre cualquier M elegible)"""
        settings = get_settings()
        return settings.K_MAX if self.M == "auto" else max(int(self.M), 1)


class ReplicationRow(BaseModel):
    """Fila del CSV de replicaciones"""
    model_config = ConfigDict(frozen=True)

    process: str
    scheme: str
    shape: str
    T: int
    N_max: str
    method: str
    delta_B: float
    delta_pred: float
    delta_pred_oracle: float
    seed: int


class PipelineResult(BaseModel):
    """Todo lo producido por una estimación"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    config: RunConfig
    grid: SpatialGrid
    fgrid: FrequencyGrid
    L: int
    resolved: Dict[str, Optional[float]]
    spectral: SpectralDensityEstimate
    cross: CrossSpectralEstimate
    R: Optional[AutocovSequence] = None
    filters: Optional[FilterSet] = None
    filters2: Optional[FilterSet] = None
    operator_filters: Optional[OperatorFilterSet] = None
    forecast: ForecastResult
    z_bar: float = 0.0
    mu: Optional[np.ndarray] = None
    traces: Dict[str, List[CVTrace]] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
