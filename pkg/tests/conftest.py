import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eshelby_lab.geometry import Ellipsoid
from eshelby_lab.materials import LameMaterial

settings.register_profile(
    "lab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")


@pytest.fixture
def unit_material():
    return LameMaterial(1.0, 1.0)


@pytest.fixture
def ref_ellipsoid():
    return Ellipsoid(np.array([1.0, 0.7, 0.4]))
