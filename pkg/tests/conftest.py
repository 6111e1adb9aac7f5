import numpy as np
import pytest

from gti.models import BananaModel, GaussianModel

# Acceptance results registered by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gauss():
    return GaussianModel(2.0, 10)


@pytest.fixture
def banana():
    return BananaModel()
