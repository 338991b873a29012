import numpy as np
import pytest

from curvedmesh import fixtures


@pytest.fixture(scope="session")
def circle_square_p4():
    return fixtures.circle_in_square(4)


@pytest.fixture(scope="session")
def circle_square_p2():
    return fixtures.circle_in_square(2)


@pytest.fixture(scope="session")
def circle_rect_p4():
    return fixtures.circle_in_rectangle(4)


@pytest.fixture(scope="session")
def sphere_cube_p4_raw():
    return fixtures.sphere_in_cube(4, smooth=False)


def mesh_bytes(mesh):
    return (mesh.nodes.tobytes(), mesh.elements.tobytes(),
            tuple(sorted(mesh.boundary_tags.items())))
