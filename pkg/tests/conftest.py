import math

import numpy as np
import pytest

from convex_order.measures import DiscreteMeasure

ROOT3_2 = math.sqrt(3) / 2


@pytest.fixture
def square_pair():
    """Two atoms on the horizontal axis against the four corners of the square."""
    mu = DiscreteMeasure(2, [[-1, 0], [1, 0]], [0.5, 0.5])
    nu = DiscreteMeasure(2, [[-1, -1], [-1, 1], [1, -1], [1, 1]], [0.25] * 4)
    return mu, nu


@pytest.fixture
def triangle_pair():
    """Two atoms inside the triangle of cube roots of unity, uniform nu on its vertices."""
    mu = DiscreteMeasure(2, [[0.5, 0], [-0.25, 0]], [1 / 3, 2 / 3])
    nu = DiscreteMeasure(2, [[1, 0], [-0.5, ROOT3_2], [-0.5, -ROOT3_2]], [1 / 3] * 3)
    return mu, nu


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
