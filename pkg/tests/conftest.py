import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from planelike.kernel import KernelSpec
from planelike.lattice import build_stencil

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def k1_1d():
    return KernelSpec("K1", dim=1, s1=0.25)


@pytest.fixture(scope="session")
def k1_2d():
    return KernelSpec("K1", dim=2, s1=0.25)


@pytest.fixture(scope="session")
def st1_32(k1_1d):
    return build_stencil(k1_1d, 32)


@pytest.fixture(scope="session")
def st2_16(k1_2d):
    return build_stencil(k1_2d, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
