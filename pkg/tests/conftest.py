import numpy as np
import pytest

from fluidnet import fixtures


@pytest.fixture
def single_queue():
    return fixtures.single_queue()


@pytest.fixture
def draining_queue():
    return fixtures.single_queue(0.0, 1.0)


@pytest.fixture
def overloaded_queue():
    return fixtures.overloaded_queue()


@pytest.fixture
def tandem():
    return fixtures.tandem()


@pytest.fixture
def two_class_priority():
    return fixtures.two_class_priority()


@pytest.fixture
def lu_kumar():
    return fixtures.lu_kumar()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
