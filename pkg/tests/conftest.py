import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hodt import Dataset

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_dataset(seed, n, d=2, n_classes=2, integer=False):
    rng = np.random.default_rng(seed)
    points = rng.integers(0, 50, size=(n, d)).astype(float) if integer else rng.random((n, d))
    labels = rng.integers(0, n_classes, size=n)
    return Dataset.from_arrays(points, labels, n_classes)


@pytest.fixture
def make_data():
    return random_dataset


#: Three segments arranged as a pinwheel: no two of them cross, yet each
#: one's line cuts the next segment, so no rule can be the root.
PINWHEEL = np.array([[1, 1], [5, 4], [9, 9], [8, 6], [8, 3], [4, 3]], dtype=float)


#: (criterion, passed, detail) lines collected by the acceptance suite.
ACCEPTANCE = []


@pytest.fixture
def report():
    def add(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
