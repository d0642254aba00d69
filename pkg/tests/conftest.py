"""Shared fixtures: small meshes, spaces and problems."""
import os

# keep test runs from writing log files into the working tree
os.environ.setdefault("UCFEM_LOG_TO_FILE", "false")
os.environ.setdefault("UCFEM_LOG_LEVEL", "WARNING")

import math  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from ucfem.fem.mesh import DomainShape, SubdomainIndicator, generate  # noqa: E402
from ucfem.fem.space import FeSpace  # noqa: E402
from ucfem.models.problem import ExactSolution, ProblemSpec  # noqa: E402


@pytest.fixture
def unit_square():
    return DomainShape.rectangle(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def strip():
    return DomainShape.rectangle(0.0, math.pi, 0.0, 1.0)


@pytest.fixture
def disk():
    return DomainShape.unit_disk()


@pytest.fixture
def square_mesh(unit_square):
    return generate(unit_square, 4)


@pytest.fixture
def square_space(square_mesh):
    return FeSpace(square_mesh, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def whole_domain():
    return SubdomainIndicator("Omega", lambda x, y: np.ones(np.broadcast(x, y).shape, dtype=bool))


@pytest.fixture
def zero_problem(unit_square, whole_domain):
    """Homogeneous data on the unit square: the discrete solution is zero."""
    return ProblemSpec(
        name="zero",
        shape=unit_square,
        omega=SubdomainIndicator("omega", lambda x, y: x > 0.5),
        target=whole_domain,
        datum=lambda x, y: 0.0 * x,
        exact=ExactSolution(lambda x, y: 0.0 * x, lambda x, y: (0.0 * x, 0.0 * y)),
    )
