import math

import pytest
from hypothesis import settings

from densosc import PotentialModel, solve_spectrum

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def box():
    return PotentialModel.box1d(math.pi)


@pytest.fixture(scope="session")
def box_spectrum(box):
    return solve_spectrum(box, 200)
