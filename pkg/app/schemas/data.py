"""
Schemas para las series observadas

- SparseFTS: curvas latentes observadas en pocos puntos con ruido
- ScalarTS: respuesta escalar (con faltantes)
- DenseFTS: serie funcional completamente observada en la grilla

Principio: Input validation (invariantes verificadas al construir)
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse

from app.schemas.grids import SpatialGrid


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


# ==================== SPARSE ====================

class SparseFTS(BaseModel):
    """
    Mediciones (x_tj, Y_tj) de las curvas X_t, t = 1..T

    Las observaciones se guardan planas y ordenadas por tiempo;
    `t` es 1-based. N_t = 0 está permitido.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    T: int = Field(..., ge=1)
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if isinstance(values, dict):
            t = np.asarray(values.get("t", []), dtype=int).ravel()
            x = np.asarray(values.get("x", []), dtype=float).ravel()
            y = np.asarray(values.get("y", []), dtype=float).ravel()
            order = np.argsort(t, kind="stable")
            values = dict(values)
            values["t"] = _frozen(t[order].copy())
            values["x"] = _frozen(x[order].copy())
            values["y"] = _frozen(y[order].copy())
        return values

    @model_validator(mode="after")
    def _check(self):
        if not (self.t.size == self.x.size == self.y.size):
            raise ValueError("t, x, y deben tener la misma longitud")
        if self.t.size < 1:
            raise ValueError("SparseFTS requiere al menos una observación")
        if np.any(self.t < 1) or np.any(self.t > self.T):
            raise ValueError("índices de tiempo fuera de 1..T")
        if np.any(self.x < 0.0) or np.any(self.x > 1.0):
            raise ValueError("ubicaciones fuera de [0, 1]")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("mediciones no finitas")
        return self

    # ==================== CONSTRUCCIÓN ====================

    @classmethod
    def from_lists(cls, obs: Sequence[Sequence[Tuple[float, float]]]) -> "SparseFTS":
        """
        Construir desde una lista por tiempo de pares (x, y)

        Ejemplo: [[(0.2, 1.0)], [(0.5, 2.0), (0.9, 0.1)]] → T=2
        """
        t, x, y = [], [], []
        for index, points in enumerate(obs, start=1):
            for loc, val in points:
                t.append(index)
                x.append(loc)
                y.append(val)
        return cls(T=len(obs), t=t, x=x, y=y)

    # ==================== ACCESO ====================

    @property
    def n_obs(self) -> int:
        return int(self.t.size)

    @property
    def counts(self) -> np.ndarray:
        """N_t para t = 1..T"""
        return np.bincount(self.t - 1, minlength=self.T)

    def obs(self, t: int) -> List[Tuple[float, float]]:
        """Lista de (x, y) en el tiempo t (1-based)"""
        mask = self.t == t
        return list(zip(self.x[mask].tolist(), self.y[mask].tolist()))

    def time_indicator(self) -> sparse.csr_matrix:
        """Matriz T x n con 1 en (t-1, j) si la observación j es del tiempo t"""
        n = self.n_obs
        return sparse.csr_matrix(
            (np.ones(n), (self.t - 1, np.arange(n))), shape=(self.T, n)
        )

    def offsets(self) -> np.ndarray:
        """Inicio de cada tiempo en los arrays planos (longitud T + 1)"""
        return np.concatenate([[0], np.cumsum(self.counts)])

    # ==================== TRANSFORMACIONES ====================

    def centered(self, mu: np.ndarray, grid: SpatialGrid) -> "SparseFTS":
        """Restar la media mu (en la grilla) interpolada en cada ubicación"""
        shift = np.interp(self.x, grid.points, mu)
        return SparseFTS(T=self.T, t=self.t, x=self.x, y=self.y - shift)

    def scaled(self, factor: float) -> "SparseFTS":
        return SparseFTS(T=self.T, t=self.t, x=self.x, y=self.y * factor)

    def with_values(self, y: np.ndarray) -> "SparseFTS":
        """Mismas ubicaciones, otras mediciones"""
        return SparseFTS(T=self.T, t=self.t, x=self.x, y=y)

    def truncated(self, S: int) -> "SparseFTS":
        """Conservar sólo t <= S (T no cambia)"""
        keep = self.t <= S
        return SparseFTS(T=self.T, t=self.t[keep], x=self.x[keep], y=self.y[keep])


# ==================== ESCALAR ====================

class ScalarTS(BaseModel):
    """Respuesta Z_t, t = 1..T; NaN = faltante"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    z: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if isinstance(values, dict):
            values = dict(values)
            values["z"] = _frozen(np.asarray(values.get("z", []), dtype=float).ravel().copy())
        return values

    @model_validator(mode="after")
    def _check(self):
        if int(np.sum(np.isfinite(self.z))) < 2:
            raise ValueError("ScalarTS requiere al menos 2 valores observados")
        return self

    @property
    def T(self) -> int:
        return int(self.z.size)

    @property
    def observed(self) -> np.ndarray:
        return np.isfinite(self.z)

    def mean(self) -> float:
        return float(np.nanmean(self.z))

    def centered(self) -> "ScalarTS":
        return ScalarTS(z=self.z - self.mean())

    def truncated(self, S: int) -> "ScalarTS":
        """Conservar Z_1..Z_S y marcar el resto como faltante (partición holdout)"""
        z = self.z.copy()
        z[S:] = np.nan
        return ScalarTS(z=z)

    def filled(self, value: float = 0.0) -> np.ndarray:
        return np.where(self.observed, self.z, value)


# ==================== DENSA ====================

class DenseFTS(BaseModel):
    """Curvas X_t completamente observadas en la grilla (T x p)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    curves: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if isinstance(values, dict):
            values = dict(values)
            curves = np.atleast_2d(np.asarray(values.get("curves"), dtype=float)).copy()
            values["curves"] = _frozen(curves)
        return values

    @model_validator(mode="after")
    def _check(self):
        if self.curves.ndim != 2:
            raise ValueError("curves debe ser una matriz T x p")
        if not np.all(np.isfinite(self.curves)):
            raise ValueError("curvas no finitas")
        return self

    @property
    def T(self) -> int:
        return int(self.curves.shape[0])

    @property
    def p(self) -> int:
        return int(self.curves.shape[1])

    def mean(self) -> np.ndarray:
        """Media puntual"""
        return self.curves.mean(axis=0)

    def centered(self, mu: Optional[np.ndarray] = None) -> np.ndarray:
        mu = self.mean() if mu is None else mu
        return self.curves - mu[None, :]
