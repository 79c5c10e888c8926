import numpy as np
import pytest

from cwnet.complex import build_complex, from_graph
from cwnet.synth import GeneratorConfig, generate_dataset, split


def triangle_complex():
    b1 = [[-1, 0, 1], [1, -1, 0], [0, 1, -1]]
    return build_complex(2, [3, 3, 1], [b1, [[1], [1], [1]]])


def square_with_diagonal():
    """Two triangles glued along an edge: 4 vertices, 5 edges, 2 faces."""
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]
    b1 = from_graph(4, edges).boundary(1)
    # faces 0-1-2 (edges 0,1,-4) and 0-2-3 (edges 4,2,3)
    b2 = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [-1, 1]])
    return build_complex(2, [4, 5, 2], [b1, b2])


@pytest.fixture
def triangle():
    return triangle_complex()


@pytest.fixture
def square():
    return square_with_diagonal()


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(GeneratorConfig(dataset_size=40, seed=3))


@pytest.fixture(scope="session")
def default_dataset():
    return generate_dataset(GeneratorConfig())


@pytest.fixture(scope="session")
def default_split(default_dataset):
    return split(default_dataset, 0.8, 0)
