import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netform.households import GeneratorSpec, generate_synthetic

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_villages():
    spec = GeneratorSpec.from_dict({"villages": 4, "size": {"min": 5, "max": 7}, "p_both": 0.3})
    return generate_synthetic(spec, seed=3)


def random_adjacency(rng, n, p=0.4):
    a = (rng.random((n, n)) < p).astype(np.uint8)
    np.fill_diagonal(a, 0)
    return a
