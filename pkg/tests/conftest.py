import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def small_grid():
    from helmfno.velocity import Grid
    return Grid(24, 24)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Six flat-A models on a 24x24 grid, one source, two frequencies, short record."""
    from helmfno.dataset import build_dataset
    from helmfno.fdtd import AbsorbingBoundary, TimeGrid
    from helmfno.velocity import Grid

    g = Grid(24, 24)
    return build_dataset("flat-A", 6, seed=5, grid=g, sources=1, freqs=[10.0, 30.0],
                         tg=TimeGrid(0.001, 400), boundary=AbsorbingBoundary(30))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
