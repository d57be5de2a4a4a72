import numpy as np
import pytest

from maxwelldg.constants import EPS0, MU0
from maxwelldg.dg_operator import DGOperator
from maxwelldg.mesh import build_structured_cube_mesh


@pytest.fixture(scope="session")
def vacuum():
    return (EPS0, MU0)


@pytest.fixture(scope="session")
def pec_mesh_n2(vacuum):
    return build_structured_cube_mesh(2, 1.0, "PEC", vacuum)


@pytest.fixture(scope="session")
def pec_op_k2(pec_mesh_n2):
    return DGOperator(pec_mesh_n2, 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
