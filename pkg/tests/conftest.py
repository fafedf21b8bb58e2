import numpy as np
import pytest

from ecosystem.core_model import assemble_generator
from ecosystem.models.network import DecayVector, Generator, InteractionMatrix


def random_system(rng: np.random.Generator, n: int, density: float = 0.6, margin: float = 0.5):
    """Random Lambda with a diagonally dominant decay, so M is Hurwitz."""
    entries = rng.uniform(0.05, 0.6, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    np.fill_diagonal(entries, 0.0)
    lam = InteractionMatrix(entries=entries)
    delta = DecayVector(rates=entries.sum(axis=0).clip(min=entries.sum(axis=1)) + margin + rng.uniform(0.0, 0.5, n))
    return lam, delta, assemble_generator(lam, delta)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_system(rng):
    def factory(n: int = 3, density: float = 0.6, margin: float = 0.5):
        return random_system(rng, n, density, margin)

    return factory


@pytest.fixture
def pair():
    lam = InteractionMatrix(entries=[[0.0, 0.4], [0.3, 0.0]])
    delta = DecayVector(rates=[1.0, 0.8])
    return lam, delta, assemble_generator(lam, delta)


@pytest.fixture
def sparse_generator() -> Generator:
    return Generator(
        matrix=[
            [-1.2, 0.5, 0.0],
            [0.0, -0.9, 0.4],
            [0.3, 0.0, -1.1],
        ]
    )
