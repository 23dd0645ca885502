from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from mvstefan import SimulationConfig

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def coarse():
    """A cheap grid for unit tests; acceptance tests use the default grid."""
    return SimulationConfig(alpha=1.0, horizon=1.0, dt=0.01, dx=0.01, x_max=4.0)
