"""
Utilidades de álgebra lineal compartidas

- Interpolación lineal/bilineal de kernels definidos en la grilla
- Cholesky con escalamiento de jitter (densa y en banda)
"""

from typing import Tuple
import logging

import numpy as np
from scipy import linalg as sla

from app.core.config import get_settings
from app.core.exceptions import SolveFailureException

logger = logging.getLogger(__name__)


# ==================== INTERPOLACIÓN ====================

def interpolation_matrix(locations: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Matriz de interpolación lineal sobre una grilla equiespaciada

    Fila i: pesos tales que f(locations[i]) ≈ row · f(points).
    Aplicada a ambos lados de un kernel da la interpolación bilineal.

    Returns:
        Array (n, p)
    """
    locations = np.asarray(locations, dtype=float)
    p = points.size
    step = points[1] - points[0]
    pos = (locations - points[0]) / step
    left = np.clip(np.floor(pos).astype(int), 0, p - 2)
    frac = pos - left
    out = np.zeros((locations.size, p))
    rows = np.arange(locations.size)
    out[rows, left] = 1.0 - frac
    out[rows, left + 1] += frac
    return out


# ==================== CHOLESKY ====================

def jittered_cholesky(matrix: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Factorización de Cholesky con jitter creciente en la diagonal

    Escala 1e-10 → 1e-6 (relativo a la diagonal media) hasta que la
    factorización tenga éxito.

    Returns:
        cho_factor de scipy (c, lower)

    Raises:
        SolveFailureException si ni con el jitter máximo se factoriza
    """
    settings = get_settings()
    try:
        return sla.cho_factor(matrix, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass

    scale = float(np.mean(np.diag(matrix))) if matrix.size else 1.0
    scale = scale if scale > 0 else 1.0
    jitter = settings.JITTER_START
    while jitter <= settings.JITTER_MAX * (1 + 1e-9):
        try:
            shifted = matrix + jitter * scale * np.eye(matrix.shape[0])
            factor = sla.cho_factor(shifted, lower=True, check_finite=False)
            logger.warning(f"⚠️ Cholesky requirió jitter {jitter:.0e}")
            return factor
        except np.linalg.LinAlgError:
            jitter *= 10.0

    raise SolveFailureException(
        message="Cholesky falló incluso con jitter máximo",
        details={"size": int(matrix.shape[0]), "max_jitter": settings.JITTER_MAX}
    )


def jittered_banded_solve(upper_band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Resolver un sistema SPD en banda (almacenamiento superior de LAPACK)

    Args:
        upper_band: Array (u+1, n) con ab[u + i - j, j] = a[i, j] para i <= j
        rhs: Lado derecho (n,) o (n, m)

    Returns:
        Solución del sistema
    """
    settings = get_settings()
    u = upper_band.shape[0] - 1
    try:
        factor = sla.cholesky_banded(upper_band, lower=False, check_finite=False)
        return sla.cho_solve_banded((factor, False), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass

    diag = upper_band[u]
    scale = float(np.mean(diag)) if diag.size else 1.0
    scale = scale if scale > 0 else 1.0
    jitter = settings.JITTER_START
    while jitter <= settings.JITTER_MAX * (1 + 1e-9):
        try:
            shifted = upper_band.copy()
            shifted[u] += jitter * scale
            factor = sla.cholesky_banded(shifted, lower=False, check_finite=False)
            logger.warning(f"⚠️ Cholesky en banda requirió jitter {jitter:.0e}")
            return sla.cho_solve_banded((factor, False), rhs, check_finite=False)
        except np.linalg.LinAlgError:
            jitter *= 10.0

    raise SolveFailureException(
        message="Cholesky en banda falló incluso con jitter máximo",
        details={"size": int(upper_band.shape[1]), "bandwidth": u}
    )
