import pytest
from hypothesis import HealthCheck, settings

from pdekd.field_data import GridMeta

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid1d():
    return GridMeta(nx=41, nt=9, dx=0.05, dt=0.1, x0=-1.0)


@pytest.fixture
def grid2d():
    return GridMeta(nx=21, ny=17, nt=7, dx=0.1, dy=0.125, dt=0.05)


ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
