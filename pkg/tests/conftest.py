import pytest

from appowersave.analysis import calibrate_profile
from appowersave.power import reference_profile


@pytest.fixture(scope="session")
def profile():
    return reference_profile()


@pytest.fixture(scope="session")
def calibrated():
    return calibrate_profile(29e6)
