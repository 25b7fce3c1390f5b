import numpy as np
import pytest

from diffjpeg.experiments import load_images


@pytest.fixture(scope="session")
def corpus():
    return load_images()


@pytest.fixture(scope="session")
def natural(corpus):
    return [(n, im) for n, im in corpus if n.startswith("natural_")]


@pytest.fixture(scope="session")
def astronaut(corpus):
    return dict(corpus)["natural_astronaut"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h=24, w=40):
    return rng.uniform(0.0, 255.0, (3, h, w))
