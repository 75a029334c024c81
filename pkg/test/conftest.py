import numpy as np
import pytest

from mixboost.divergence import DiscreteDistribution


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def four_examples():
    """Discriminator outputs and uniform weights whose density ratios are
    (1/4, 2/3, 1, 4).
    """
    d = np.array([0.8, 0.6, 0.5, 0.2])
    p = np.full(4, 0.25)
    return d, p


@pytest.fixture
def two_atoms():
    return DiscreteDistribution([0.5, 0.5]), DiscreteDistribution([0.9, 0.1])


@pytest.fixture
def two_modes(rng):
    """1000 points from two well separated 2-d Gaussians."""
    left = rng.normal(loc=(-5.0, 0.0), scale=0.5, size=(500, 2))
    right = rng.normal(loc=(5.0, 0.0), scale=0.5, size=(500, 2))
    return np.vstack([left, right])
