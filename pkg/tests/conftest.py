import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from isrm.simulator.floorplan import FloorplanConfig, generate_floorplan

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_floorplan():
    """A few-room 6 m x 6 m layout, cheap enough for full episodes."""
    return generate_floorplan(FloorplanConfig(extent=(6.0, 6.0), min_room=2.0, max_room=3.5, min_rooms=3,
                                              min_labels=2, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
