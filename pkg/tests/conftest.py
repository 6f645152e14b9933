import os

import pytest
from hypothesis import HealthCheck, settings

from spinorlab.lattice import build_domain, make_standard_domain

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

A = (2, 0)
B_EDGE = (4, 2)  # shares an edge with A


@pytest.fixture
def single():
    return build_domain([A])


@pytest.fixture
def domino():
    return build_domain([A, B_EDGE])


@pytest.fixture
def block3():
    return make_standard_domain("rectangle(3,3)")
