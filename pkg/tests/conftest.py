import numpy as np
import pytest

from smile.data import Dataset, center
from smile.simulation import DgpSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_aplm():
    """A modest APLM replicate (raw dataset, truth) shared by several modules."""
    return generate(DgpSpec(n=300, p1=20, p2=20, sigma=0.5, seed=7), 0)


@pytest.fixture
def toy_dataset(rng):
    n = 80
    z = (rng.uniform(size=(n, 2)) > 0.5).astype(float)
    x = rng.uniform(-0.5, 0.5, size=(n, 3))
    y = 2 * z[:, 0] + 3 * x[:, 0] + np.sin(2 * np.pi * x[:, 1]) + 0.1 * rng.standard_normal(n)
    return Dataset(y, z, x)


@pytest.fixture
def centered_toy(toy_dataset):
    return center(toy_dataset)
