import sys
from pathlib import Path

import dataclasses
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hullopt.analysis import HullStudy
from hullopt.config import GridConfig, QuadratureConfig, default_config
from hullopt.geometry import build_grid


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240615)


@pytest.fixture(scope="session")
def tiny_grid():
    return build_grid(2.0, 0.2, 8, 4)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(2.0, 0.2, 24, 8)


def reduced_config(nx, nz, n_per_octave=40, **solver_kwargs):
    """Default physical setup on a smaller grid (for fast experiment tests)."""
    config = default_config()
    config = dataclasses.replace(
        config,
        grid=GridConfig(nx=nx, nz=nz),
        quadrature=QuadratureConfig(n_per_octave=n_per_octave),
    )
    if solver_kwargs:
        config = dataclasses.replace(
            config, solver=dataclasses.replace(config.solver, **solver_kwargs))
    return config


@pytest.fixture(scope="session")
def study_full():
    """Desk-scale reference study (100x20 grid, 80 nodes per octave).

    Session-scoped: several acceptance criteria share its assemblies and
    solves through `solve_cached`.
    """
    study = HullStudy(default_config())
    study._solve_cache = {}
    return study


def solve_cached(study, froude):
    key = round(float(froude), 12)
    if key not in study._solve_cache:
        study._solve_cache[key] = study.solve(froude)
    return study._solve_cache[key]
