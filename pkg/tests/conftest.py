import numpy as np
import pytest

from fddextrap.array_model import (CylindricalArraySpec, ElementSpec, ExplicitArraySpec,
                                   eadf_from_pattern, make_synthetic_pattern)
from fddextrap.grids import AngleGrid, FrequencyGrid


@pytest.fixture(scope="session")
def desk_geometry():
    return CylindricalArraySpec(columns=8, rows=2)


@pytest.fixture(scope="session")
def desk_pattern(desk_geometry):
    """16-port EADF pattern on the default 5 degree / 5 MHz calibration grids."""
    return eadf_from_pattern(make_synthetic_pattern(desk_geometry))


@pytest.fixture(scope="session")
def full_geometry():
    return CylindricalArraySpec()


@pytest.fixture(scope="session")
def full_pattern(full_geometry):
    return eadf_from_pattern(make_synthetic_pattern(full_geometry))


@pytest.fixture(scope="session")
def isotropic_pattern():
    """Single isotropic port at the origin: unit gain everywhere."""
    geo = ExplicitArraySpec([[0.0, 0.0, 0.0]], element=ElementSpec(isotropic=True))
    cal = FrequencyGrid(3.3e9, 50e6, 9)
    return eadf_from_pattern(make_synthetic_pattern(geo, AngleGrid.uniform(10.0), cal))


@pytest.fixture
def rng():
    return np.random.default_rng(20240404)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, ok, detail)`` for the end-of-run verdict table."""
    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
