import numpy as np
import pytest

from divflow import zoo


@pytest.fixture(scope="session")
def torus():
    return zoo.manifold("torus")


@pytest.fixture(scope="session")
def revolution():
    return zoo.manifold("revolution:1/(1+x^2)")


@pytest.fixture(scope="session")
def hyperbolic():
    return zoo.manifold("hyperbolic")


@pytest.fixture(scope="session")
def ex2():
    return zoo.manifold("warp:ex2")


@pytest.fixture(scope="session")
def ex3():
    return zoo.manifold("warp:ex3")


@pytest.fixture(scope="session")
def ex4():
    return zoo.manifold("warp:ex4")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
