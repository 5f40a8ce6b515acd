import numpy as np
import pytest

from rnnchaos import pwl


def random_unit_map(rng, n_pieces=None, max_pieces=12):
    """Random continuous PWL map on [0, 1] with values in [0, 1]."""
    n = n_pieces or int(rng.integers(1, max_pieces + 1))
    inner = np.sort(rng.uniform(0.0, 1.0, size=n - 1))
    xs = np.concatenate(([0.0], inner, [1.0]))
    return pwl.PwlMap(xs, rng.uniform(0.0, 1.0, size=n + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
