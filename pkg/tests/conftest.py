import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphsteps.graphs import Graph
from graphsteps.pipeline import make_instance
from graphsteps.tasks import TaskKind


@pytest.fixture
def triangle_weighted():
    return Graph.from_edges(3, False, [(0, 1, 1), (1, 2, 2), (0, 2, 3)])


@pytest.fixture
def path3():
    return Graph.from_edges(3, False, [(0, 1), (1, 2)])


@pytest.fixture
def degree_pair():
    """A tiny degree instance with its trace, handy across suites."""
    return make_instance(TaskKind.DEGREE, "tiny", seed=11, index=0)
