import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hispbvi.benchgen import BenchmarkSpec, generate  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "data")


def make(family, n=2, horizon=3, discount=1.0, **params):
    return generate(BenchmarkSpec(family, n, horizon=horizon, discount=discount, params=params))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiger2():
    return make("tiger", 2, 3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
