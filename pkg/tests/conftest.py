import numpy as np
import pytest

from pulsenet.mlp import TrainConfig, train, train_qat
from pulsenet.optimizer import generate_dataset, split_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def dataset():
    """Default 101-point run, -pi dropped, 60/20/20 split."""
    return split_dataset(generate_dataset(), seed=0)


@pytest.fixture(scope="session")
def large_model(dataset):
    return train("large", dataset, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def small_model(dataset):
    return train("small", dataset, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def arty_model(dataset, small_model):
    return train_qat("small", dataset, TrainConfig(seed=0), preset="arty-mixed", init=small_model)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
