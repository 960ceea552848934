import numpy as np
import pytest

from liftperc.graphs import build_box, build_complete, build_cycle, build_tree


@pytest.fixture(scope="session")
def box5():
    return build_box(2, 5)


@pytest.fixture(scope="session")
def cycle3():
    return build_cycle(3)


@pytest.fixture(scope="session")
def cycle4():
    return build_cycle(4)


@pytest.fixture(scope="session")
def k4():
    return build_complete(4)


@pytest.fixture(scope="session")
def tree22():
    return build_tree(2, 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
