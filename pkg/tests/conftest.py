import pytest

from omni3d.celllib import load_library_file
from omni3d.dtco import DATA_DIR, load_coefficients


@pytest.fixture(scope="session")
def coeff():
    return load_coefficients()


@pytest.fixture(scope="session")
def library():
    return load_library_file(DATA_DIR / "default.lib")


@pytest.fixture(scope="session")
def masters(library):
    return library.pin_specs()


@pytest.fixture(scope="session")
def omni(library):
    return library.view("Omni3D")


@pytest.fixture(scope="session")
def cfet(library):
    return library.view("CFET")
