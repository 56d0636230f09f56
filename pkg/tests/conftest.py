import numpy as np
import pytest
from hypothesis import settings

from stochns import spectral as sp

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[2, 4, 6])
def small_grid(request):
    return sp.make_grid(request.param)


@pytest.fixture
def grid4():
    return sp.make_grid(4)


@pytest.fixture
def grid16():
    return sp.make_grid(16)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
