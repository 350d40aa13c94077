import numpy as np
import pytest

from odflow import get_fixture

# Hand-checkable incidence matrix of the triangle fixture with all four
# links measured in network order (rows l1-2, l1-3, l2-3, l3-1).
TRIANGLE_MATRIX = np.array([
    [1, 1, 0, 0, 0, 0, 1],
    [0, 0, 1, 0, 0, 0, 0],
    [0, 1, 0, 1, 1, 0, 0],
    [0, 0, 0, 1, 0, 1, 1],
], dtype=float)

# Incidence matrix of the four-zone fixture with all ten links measured in
# network order.
FOURZONE_MATRIX = np.array([
    [0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0],
    [0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0],
    [0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1],
    [0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1],
], dtype=float)

# Dynamic expansion of the triangle fixture for a single count time t and
# unit travel times, keyed by (path position, departure offset relative
# to t).  The matrix rows follow the network link order.
TRIANGLE_DYNAMIC_COLUMNS = {
    (0, 0): [1, 0, 0, 0],
    (1, 0): [1, 0, 0, 0],
    (2, 0): [0, 1, 0, 0],
    (1, -1): [0, 0, 1, 0],
    (3, 0): [0, 0, 1, 0],
    (3, -1): [0, 0, 0, 1],
    (4, 0): [0, 0, 1, 0],
    (5, 0): [0, 0, 0, 1],
    (6, 0): [0, 0, 0, 1],
    (6, -1): [1, 0, 0, 0],
}


@pytest.fixture(scope="session")
def fig1():
    return get_fixture("fig1")


@pytest.fixture(scope="session")
def fig2():
    return get_fixture("fig2")


@pytest.fixture(scope="session")
def nguyen():
    return get_fixture("nguyen")
