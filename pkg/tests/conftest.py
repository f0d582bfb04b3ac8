import numpy as np
import pytest

import steklov_lab.views.settings as settings
from steklov_lab.modules.forms import ProblemSpec, assemble_problem
from steklov_lab.modules.geometry import Mesh, build_annulus, build_rectangle
from steklov_lab.modules.spectrum import cluster_eigen, solve_eigen


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch):
    monkeypatch.setattr(settings, "SHOW_PROGRESS", False)


@pytest.fixture(scope="session")
def annulus():
    return build_annulus(0.5, 1.0, 4, 32)


@pytest.fixture(scope="session")
def fine_annulus():
    return build_annulus(0.5, 1.0, 12, 96)


@pytest.fixture(scope="session")
def rectangle():
    return build_rectangle(2.0, 1.0, 8, 4, ("bottom", "top"))


@pytest.fixture(scope="session")
def skew_rectangle():
    """No symmetry forces a multiple eigenvalue here."""
    return build_rectangle(1.3, 1.0, 6, 5, ("top",))


@pytest.fixture(scope="session")
def triangle_mesh():
    return Mesh(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0, 1, 2]],
        [[0, 1], [1, 2], [2, 0]],
        ["S", "W", "W"],
    )


@pytest.fixture(scope="session")
def p1():
    return ProblemSpec("P1")


@pytest.fixture(scope="session")
def p2():
    return ProblemSpec("P2")


@pytest.fixture(scope="session")
def annulus_solution(annulus, p1):
    return solve_eigen(assemble_problem(annulus, p1), 8)


@pytest.fixture(scope="session")
def annulus_groups(annulus_solution):
    return cluster_eigen(annulus_solution)


@pytest.fixture(scope="session")
def first_pair(annulus_groups):
    """The k = 1 double eigenvalue."""
    group = annulus_groups[1]
    assert group.multiplicity == 2
    return group


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

