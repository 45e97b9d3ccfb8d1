import numpy as np
import pytest

from mhdpot.mesh import Mesh, build_lshape_mesh, build_square_with_hole_mesh


@pytest.fixture(scope="session")
def lshape8():
    return build_lshape_mesh(8)


@pytest.fixture(scope="session")
def annulus8():
    return build_square_with_hole_mesh(8)


@pytest.fixture
def unit_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    edges = np.array([[0, 1], [1, 2], [2, 0]])
    return Mesh(verts, tris, edges, np.zeros(3, dtype=np.int64))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
