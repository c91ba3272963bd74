import pytest
from hypothesis import HealthCheck, settings

from fracheat.kernel import FracParams

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def p_1_2():
    return FracParams(1, 2.0)


@pytest.fixture(scope="session")
def p_1_1():
    return FracParams(1, 1.0)


@pytest.fixture(scope="session")
def p_1_15():
    return FracParams(1, 1.5)
