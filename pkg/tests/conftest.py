from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fragkin.grids import SizeGrid, SpaceGrid

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def space1() -> SpaceGrid:
    return SpaceGrid(1, 2 * np.pi, 32)


@pytest.fixture
def size64() -> SizeGrid:
    return SizeGrid(0.01, 100.0, 64)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
