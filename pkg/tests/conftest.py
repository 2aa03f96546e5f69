import sys

import pytest

from maassdyn import acceptance
from maassdyn.config import RunConfig, build


@pytest.fixture(scope="session")
def example():
    return build(RunConfig(group="example", preset="reference"))


@pytest.fixture(scope="session")
def modular():
    return build(RunConfig(group="psl2z"))


@pytest.fixture(scope="session")
def example_eigen():
    return acceptance.example_eigen()


@pytest.fixture(scope="session")
def modular_eigen():
    return acceptance.modular_eigen()


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
