from dataclasses import replace

import pytest
from hypothesis import HealthCheck, settings

from impactmm.config import builtin_config, desk_scale

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def baseline_cfg():
    """Shipped baseline at desk scale (50 steps, batch 512, 50 epochs)."""
    return desk_scale(builtin_config("baseline"))


@pytest.fixture(scope="session")
def tiny_cfg(baseline_cfg):
    """Baseline market with a short grid and tiny batches, for fast sims."""
    return replace(
        baseline_cfg,
        grid=replace(baseline_cfg.grid, steps=8),
        train=replace(baseline_cfg.train, batch_size=32, epochs=3),
    )
