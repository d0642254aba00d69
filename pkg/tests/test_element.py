import math

import numpy as np
import pytest

from ucfem.exceptions import SpaceError
from ucfem.fem.element import lagrange_element, line_quadrature, triangle_quadrature


@pytest.mark.parametrize("degree", range(0, 9))
def test_triangle_quadrature_exactness(degree):
    quad = triangle_quadrature(degree)
    x, y = quad.points[:, 0], quad.points[:, 1]

    assert np.all(quad.weights > 0)
    assert quad.weights.sum() == pytest.approx(0.5, abs=1e-15)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert np.sum(quad.weights * x ** a * y ** b) == pytest.approx(exact, abs=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 3, 6])
def test_line_quadrature_exactness(degree):
    points, weights = line_quadrature(degree)
    for k in range(degree + 1):
        assert np.sum(weights * points ** k) == pytest.approx(1.0 / (k + 1), abs=1e-15)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_kronecker_property(order):
    element = lagrange_element(order)
    np.testing.assert_allclose(element.values(element.nodes), np.eye(element.num_local), atol=1e-12)
    assert element.num_local == (order + 1) * (order + 2) // 2


@pytest.mark.parametrize("order", [1, 2, 3])
def test_partition_of_unity(order):
    element = lagrange_element(order)
    points = triangle_quadrature(4).points

    np.testing.assert_allclose(element.values(points).sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(element.gradients(points).sum(axis=-2), 0.0, atol=1e-10)
    np.testing.assert_allclose(element.hessians(points).sum(axis=-3), 0.0, atol=1e-9)


def test_quadratic_reproduction():
    element = lagrange_element(2)
    nodes = element.nodes
    coefficients = nodes[:, 0] ** 2 + 3 * nodes[:, 0] * nodes[:, 1]
    points = np.array([[0.2, 0.3], [0.6, 0.1]])

    np.testing.assert_allclose(element.values(points) @ coefficients,
                               points[:, 0] ** 2 + 3 * points[:, 0] * points[:, 1], atol=1e-13)
    hessian = np.einsum("qide,i->qde", element.hessians(points), coefficients)
    np.testing.assert_allclose(hessian, [[[2.0, 3.0], [3.0, 0.0]]] * 2, atol=1e-11)


def test_unsupported_order():
    with pytest.raises(SpaceError):
        lagrange_element(4)
