import sys

import numpy as np
import pytest

from rfgsvi.dataset import Dataset
from rfgsvi.rng import RngSeed
from rfgsvi.sim import DgpSpec, generate_dgp


@pytest.fixture
def scenario1():
    return generate_dgp(DgpSpec(1, n=300), RngSeed(11))


@pytest.fixture
def noisy():
    gen = np.random.default_rng(5)
    X = gen.normal(size=(200, 3))
    y = 2 * X[:, 0] - X[:, 1] + gen.normal(scale=0.5, size=200)
    return Dataset.from_arrays(X, y)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
