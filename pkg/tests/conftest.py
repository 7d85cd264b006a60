import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from touchloc.config import ExperimentConfig
from touchloc.geometry import Scene, SensorRig, drill_mesh

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def drill_scene():
    return Scene(drill_mesh(), SensorRig.three_finger(0.03))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_config():
    """A quick drill experiment: 2 seeds, 100 particles, 20 actions."""
    return ExperimentConfig(particles=100, n_human=3, n_sphere=4, n_normal=10, n_table=3,
                            seeds=(0, 1), metrics=("ig", "hp", "whp", "random", "human"))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
