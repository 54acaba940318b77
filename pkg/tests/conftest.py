"""Pytest configuration and fixtures."""

import numpy as np
import pytest
from pyrobustlasso.models.dataset import Dataset, validate_dataset
from pyrobustlasso.simulation.dgp import SimulationConfig


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add the --runslow flag."""
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Run slow Monte Carlo reproductions",
    )


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    """Skip tests marked slow unless --runslow is given."""
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a seeded random generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def sparse_dataset(rng: np.random.Generator) -> Dataset:
    """
    Return a small sparse design with one treatment and two outlier rows.

    n=60, p=8; y depends on x1, x2 and d; d depends on x3.
    """
    n, p = 60, 8
    X = rng.standard_normal((n, p))
    d = 2.0 * X[:, 2] + rng.standard_normal(n)
    d[11] += 15.0
    y = 1.0 * d + 3.0 * X[:, 0] - 2.0 * X[:, 1] + rng.standard_normal(n)
    y[40] += 20.0
    return validate_dataset(y, d, X, treatment_names=("d",))


@pytest.fixture
def small_sim_config() -> SimulationConfig:
    """Return a fast simulation configuration with outliers enabled."""
    return SimulationConfig(
        n=60, p=15, eps=0.05, z=10.0, reps=6, seed=7, batch_size=2
    )
