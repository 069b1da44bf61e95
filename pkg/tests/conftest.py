import numpy as np
import pytest

from twoaspect.data import generate_synthetic

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """8 videos x 16 frames, seed 7, default sentinel fraction."""
    out = tmp_path_factory.mktemp("ds")
    generate_synthetic(8, 16, 7, out)
    return out


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
