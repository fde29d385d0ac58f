import functools

import numpy as np
import pytest

from holab.scenarios import load_scenario


@functools.lru_cache(maxsize=None)
def scenario(name):
    return load_scenario(name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
