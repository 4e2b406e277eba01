import pytest
from hypothesis import HealthCheck, settings

from memsx.core import ModelParams, PermittivityProfile, build_grid

settings.register_profile(
    "memsx",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("memsx")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def params():
    return ModelParams(delta=0.1, eps=0.2)


@pytest.fixture
def sigma2():
    return PermittivityProfile.constant(2.0)


@pytest.fixture
def small_grid():
    return build_grid(31, 9, 5)

