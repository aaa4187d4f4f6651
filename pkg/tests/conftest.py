import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fdsurvey.numerics import TimeGrid

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid11():
    return TimeGrid.uniform(11)


def pytest_terminal_summary(terminalreporter):
    import _report

    if _report.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_report.LINES):
            terminalreporter.write_line(_report.LINES[n])
