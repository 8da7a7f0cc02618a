import numpy as np
import pytest

from mellin_deconv.mellin import ErrorDensity

# The five error laws of the simulation studies.
STUDY_FAMILIES = {
    "u01": ErrorDensity.uniform(0.0, 1.0),
    "u0515": ErrorDensity.uniform(0.5, 1.5),
    "b12": ErrorDensity.beta(1.0, 2.0),
    "b21": ErrorDensity.beta(2.0, 1.0),
    "b22": ErrorDensity.beta(2.0, 2.0),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture(params=sorted(STUDY_FAMILIES))
def family(request):
    return STUDY_FAMILIES[request.param]
