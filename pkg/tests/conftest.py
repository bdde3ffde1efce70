import numpy as np
import pytest

from blockhermite import PlummerParams, generate_plummer


@pytest.fixture(scope="session")
def plummer_4096():
    return generate_plummer(PlummerParams(4096, seed=7))


@pytest.fixture(scope="session")
def plummer_256():
    return generate_plummer(PlummerParams(256, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance verdicts, echoed in the terminal summary even without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
