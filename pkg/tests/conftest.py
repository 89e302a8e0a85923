import warnings

import numpy as np
import pytest

from wigneravg.errors import BoundaryDecayWarning
from wigneravg.grid import SpatialGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def box():
    """256 points on [-8, 8): wide enough for hbar >= 0.05 Gaussians."""
    return SpatialGrid(256, 16.0)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        yield


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    return lines


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
