import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfgac.datasets import fixtures, make_random_model  # noqa: E402

FIXTURES = fixtures()
SMALL_RANDOM = [
    make_random_model(n=3, m=2, lambda_mass=0.4, seed=s) for s in range(3)
] + [
    make_random_model(n=2, m=3, lambda_mass=0.3, kappa=0.3, seed=10 + s) for s in range(2)
]


@pytest.fixture(params=sorted(FIXTURES), ids=sorted(FIXTURES))
def fixture_model(request):
    return FIXTURES[request.param]


@pytest.fixture
def m1():
    return FIXTURES["M1"]


@pytest.fixture
def m2():
    return FIXTURES["M2"]


@pytest.fixture
def m2_tensor():
    return FIXTURES["M2-tensor"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
