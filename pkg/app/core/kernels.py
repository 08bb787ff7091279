"""
Kernels de suavizado y pesos de Bartlett

Principios:
- DRY: Un solo lugar para el kernel de Epanechnikov y los pesos de lag
- FALLBACK: Los ajustes locales degradan cuadrático → lineal → constante
"""

from typing import Tuple
import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


# ==================== KERNEL ====================

def epanechnikov(v):
    """
    Kernel de Epanechnikov K(v) = 0.75 (1 - v^2) en [-1, 1], 0 fuera

    Acepta escalares o arrays (vectorizado).
    """
    v = np.asarray(v, dtype=float)
    out = np.where(np.abs(v) <= 1.0, 0.75 * (1.0 - v * v), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


# ==================== BARTLETT ====================

def bartlett_span_default(T: int) -> int:
    """L = floor(2 T^(1/3)), mínimo 1"""
    # cbrt exacta para cubos perfectos (T=1000 → 10)
    root = round(T ** (1.0 / 3.0))
    cube_root = root if root ** 3 == T else T ** (1.0 / 3.0)
    return max(1, int(math.floor(2.0 * cube_root)))


def bartlett_weight(L: int, h: int) -> float:
    """W_h = 1 - |h|/L para |h| < L, 0 en otro caso"""
    if abs(h) >= L:
        return 0.0
    return 1.0 - abs(h) / L


# ==================== AJUSTE LOCAL ====================

def intercept_weights(
    normal: np.ndarray,
    max_cond: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Primera fila de la inversa de cada matriz normal, con cadena de fallback

    Para cada punto de evaluación se intenta el ajuste de orden completo d;
    si la matriz está mal condicionada se usa el bloque principal (d-1)x(d-1),
    y así hasta el ajuste local constante (media ponderada).

    Args:
        normal: Matrices normales simétricas, shape (..., d, d)
        max_cond: Número de condición máximo aceptado

    Returns:
        (e, order): e con shape (..., d) tal que intercepto = e · rhs,
        order con el orden usado por punto (0 = sin puntos en la ventana, e = NaN)
    """
    batch_shape = normal.shape[:-2]
    d = normal.shape[-1]
    flat = normal.reshape((-1, d, d))
    n = flat.shape[0]

    weights = np.full((n, d), np.nan)
    order = np.zeros(n, dtype=int)
    pending = np.ones(n, dtype=bool)

    for k in range(d, 0, -1):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        sub = flat[idx, :k, :k]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.linalg.cond(sub)
        ok = np.isfinite(cond) & (cond < max_cond) & (sub[:, 0, 0] > 0)
        if not ok.any():
            continue
        rhs = np.zeros((int(ok.sum()), k))
        rhs[:, 0] = 1.0
        sol = np.linalg.solve(sub[ok], rhs[..., None])[..., 0]
        rows = idx[ok]
        weights[rows] = 0.0
        weights[rows, :k] = sol
        order[rows] = k
        pending[rows] = False

    degraded = int(np.sum((order > 0) & (order < d)))
    if degraded:
        logger.debug(f"⚠️ {degraded} ajustes locales degradados a orden menor")

    return weights.reshape(batch_shape + (d,)), order.reshape(batch_shape)


def local_polynomial_line(
    locations: np.ndarray,
    values: np.ndarray,
    points: np.ndarray,
    bandwidth: float,
    degree: int,
    max_cond: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Suavizador local-polinomial 1-D con kernel de Epanechnikov

    Minimiza sum K((x_i - x)/B) (v_i - c_0 - c_1 (x_i - x) - ...)^2 en cada punto x.

    Returns:
        (intercepts, order) en los puntos de evaluación
    """
    locations = np.asarray(locations, dtype=float)
    values = np.asarray(values, dtype=float)
    scaled = (locations[:, None] - points[None, :]) / bandwidth
    kern = epanechnikov(scaled)

    d = degree + 1
    normal = np.empty((points.size, d, d))
    rhs = np.empty((points.size, d))
    powers = [kern]
    for _ in range(2 * degree):
        powers.append(powers[-1] * scaled)
    moments = [p.sum(axis=0) for p in powers]
    for r in range(d):
        for s in range(d):
            normal[:, r, s] = moments[r + s]
        rhs[:, r] = values @ powers[r]

    weights, order = intercept_weights(normal, max_cond)
    return np.einsum("pd,pd->p", weights, rhs), order
