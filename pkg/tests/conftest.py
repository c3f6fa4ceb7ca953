import pytest

from helmpoisson.discretization import build_grid
from helmpoisson.geometry import make_shape


@pytest.fixture(scope="session")
def ssh_grid():
    return build_grid(make_shape("square_square_hole"), 0.1)


@pytest.fixture(scope="session")
def shape1_coarse():
    return build_grid(make_shape("shape1"), 0.02)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
