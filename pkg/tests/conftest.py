"""
Fixtures compartidas

Grillas chicas y escenarios simulados con semilla fija; los escenarios
tienen scope de sesión porque varios módulos los reutilizan.
"""

import numpy as np
import pytest

from app.schemas.grids import FrequencyGrid, SpatialGrid
from app.schemas.simulation import SimConfig
from app.services.simulation_service import SimulationService


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def grid():
    return SpatialGrid(p=21)


@pytest.fixture
def fgrid():
    return FrequencyGrid(n_freq=64)


@pytest.fixture(scope="session")
def sparse_scenario():
    """FAR(1), reg1, forma b, T=60, N_max=10 en una grilla de 21 puntos"""
    sim = SimConfig(T=60, N_max=10, p=21, seed=7)
    data, Z, truth = SimulationService.simulate(sim)
    return sim, data, Z, truth


@pytest.fixture(scope="session")
def dense_scenario():
    """Mismo diseño completamente observado, otra semilla"""
    sim = SimConfig(T=60, N_max=None, p=21, seed=11)
    data, Z, truth = SimulationService.simulate(sim)
    return sim, data, Z, truth


def random_sparse(rng, T: int, per_time: int, values=None):
    """SparseFTS con per_time ubicaciones uniformes por curva y valores N(0, 1) o values(x)"""
    from app.schemas.data import SparseFTS

    t = np.repeat(np.arange(1, T + 1), per_time)
    x = rng.uniform(0.0, 1.0, size=t.size)
    y = rng.standard_normal(t.size) if values is None else values(x)
    return SparseFTS(T=T, t=t, x=x, y=y)
