import numpy as np
import pytest

from hmmrd.mesh import build_box_triangular, build_from_arrays, perturb_vertices


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_mesh():
    return build_box_triangular(0.0, 1.0, 0.0, 1.0, 4)


@pytest.fixture
def perturbed_mesh(rng):
    return perturb_vertices(build_box_triangular(0.0, 1.0, 0.0, 1.0, 5), 0.15, rng)


@pytest.fixture
def mixed_mesh():
    """Unit square split into four non-rectangular quadrilaterals."""
    verts = [(0, 0), (0.5, 0), (1, 0), (1, 0.6), (1, 1), (0.4, 1), (0, 1), (0, 0.5), (0.55, 0.45)]
    cells = [(0, 1, 8, 7), (1, 2, 3, 8), (8, 3, 4, 5), (7, 8, 5, 6)]
    return build_from_arrays(np.array(verts, dtype=float), cells)


def random_meshes(rng, count, n_max=8):
    out = []
    for _ in range(count):
        n = int(rng.integers(2, n_max + 1))
        m = build_box_triangular(0.0, 1.0 + rng.random(), 0.0, 1.0 + rng.random(), n)
        out.append(perturb_vertices(m, 0.15, rng))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
