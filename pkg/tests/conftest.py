import numpy as np
import pytest

from curvedhho import harness
from curvedhho.meshgen import CutSpec, cut_cartesian

SEED = 20240117


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def ellipse():
    return harness.ellipse_case()


@pytest.fixture(scope="session")
def hetero():
    return harness.hetero_case()


@pytest.fixture(scope="session")
def ellipse_mesh_n4(ellipse):
    return harness.case_mesh(ellipse, 0, "curved")


@pytest.fixture(scope="session")
def ellipse_mesh_n8(ellipse):
    return harness.case_mesh(ellipse, 1, "curved")


@pytest.fixture(scope="session")
def disc_mesh_n4(hetero):
    return harness.case_mesh(hetero, 0, "curved")


@pytest.fixture(scope="session")
def square_grid():
    """2x2 uniform grid on the unit square (no cutting curves)."""
    return cut_cartesian(CutSpec(box=((0.0, 0.0), (1.0, 1.0)), n=2, loops=[]))
