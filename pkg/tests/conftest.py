import numpy as np
import pytest

from pfnav.basis import RbfBasis
from pfnav.dynamics import Box, VectorField


@pytest.fixture
def unit_box():
    return Box([0.0, 0.0], [10.0, 10.0])


@pytest.fixture
def small_basis(unit_box):
    return RbfBasis.grid(unit_box, [5, 5], sigma_factor=0.4)


@pytest.fixture
def decay_field():
    """Scalar xdot = -x on a 1-D box."""
    box = Box([-5.0], [5.0])
    return VectorField(1, lambda x: -x, box, name="decay")


@pytest.fixture
def zero_field_2d(unit_box):
    return VectorField(2, lambda x: np.zeros(2), unit_box, name="zero")
