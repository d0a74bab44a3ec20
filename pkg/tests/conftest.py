import numpy as np
import pytest

from mammobot.geometry import RigidTransform, random_rotation
from mammobot.scenario import ScenarioConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def clean_scenario():
    return ScenarioConfig().noiseless()


def random_transform(rng, spread=100.0):
    return RigidTransform(random_rotation(rng), rng.uniform(-spread, spread, 3))


# acceptance criteria record one line each; printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line[1])
