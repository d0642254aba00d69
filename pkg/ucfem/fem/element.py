"""
Reference Lagrange elements of order 1-3 on the unit triangle and
quadrature rules.

The reference triangle has vertices (0, 0), (1, 0), (0, 1). Local nodes are
ordered vertices first, then the p - 1 points of each edge (edges 0-1, 1-2,
2-0, walked from the first to the second vertex), then interior points.
Basis functions are expressed in the monomial basis through the inverse
Vandermonde matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from ucfem.exceptions import SpaceError

SUPPORTED_ORDERS = (1, 2, 3)

_REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_REFERENCE_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class Quadrature:
    """Quadrature rule on the reference triangle (weights sum to 1/2)."""

    points: np.ndarray       # (Q, 2) reference coordinates
    weights: np.ndarray      # (Q,)
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        """Points in barycentric coordinates (Q, 3)."""
        x, y = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - x - y, x, y])

    def __len__(self) -> int:
        return int(self.weights.shape[0])


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> Quadrature:
    """
    Collapsed Gauss-Legendre rule exact for polynomials of total degree ``degree``.

    The square [0, 1]^2 is mapped onto the triangle by x = s (1 - t), y = t;
    the Jacobian (1 - t) raises the degree in t by one.
    """
    degree = max(int(degree), 0)
    n = (degree + 3) // 2
    nodes, weights = leggauss(n)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    s, t = np.meshgrid(nodes, nodes, indexing="ij")
    ws, wt = np.meshgrid(weights, weights, indexing="ij")
    points = np.column_stack([(s * (1.0 - t)).ravel(), t.ravel()])
    w = (ws * wt * (1.0 - t)).ravel()
    points.setflags(write=False)
    w.setflags(write=False)
    return Quadrature(points=points, weights=w, degree=degree)


@lru_cache(maxsize=None)
def line_quadrature(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact for degree ``degree``: (points, weights)."""
    n = max(int(degree) // 2 + 1, 1)
    nodes, weights = leggauss(n)
    points = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    points.setflags(write=False)
    w.setflags(write=False)
    return points, w


def _monomial_exponents(order: int) -> np.ndarray:
    return np.array([(a, total - a) for total in range(order + 1) for a in range(total, -1, -1)])


def _reference_nodes(order: int) -> np.ndarray:
    nodes = [tuple(v) for v in _REFERENCE_VERTICES]
    for a, b in _REFERENCE_EDGES:
        va, vb = _REFERENCE_VERTICES[a], _REFERENCE_VERTICES[b]
        for k in range(1, order):
            nodes.append(tuple(va + (vb - va) * k / order))
    for j in range(1, order):
        for i in range(1, order - j):
            nodes.append((i / order, j / order))
    return np.array(nodes)


class LagrangeElement:
    """Lagrange basis of order p on the reference triangle."""

    def __init__(self, order: int):
        if order not in SUPPORTED_ORDERS:
            raise SpaceError(f"Unsupported Lagrange order {order}; expected one of {SUPPORTED_ORDERS}")
        self.order = order
        self.exponents = _monomial_exponents(order)
        self.nodes = _reference_nodes(order)
        self.num_local = self.nodes.shape[0]
        self.num_edge_interior = order - 1
        self.num_cell_interior = (order - 1) * (order - 2) // 2

        vandermonde = self._monomials(self.nodes)
        # column i of the coefficient matrix holds basis function i
        self.coefficients = np.linalg.inv(vandermonde)

    def _monomials(self, points: np.ndarray) -> np.ndarray:
        x = points[..., 0, None]
        y = points[..., 1, None]
        return x ** self.exponents[:, 0] * y ** self.exponents[:, 1]

    def _monomial_gradients(self, points: np.ndarray) -> np.ndarray:
        x = points[..., 0, None]
        y = points[..., 1, None]
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        dx = a * x ** np.maximum(a - 1, 0) * y ** b
        dy = b * x ** a * y ** np.maximum(b - 1, 0)
        return np.stack([dx, dy], axis=-1)

    def _monomial_hessians(self, points: np.ndarray) -> np.ndarray:
        x = points[..., 0, None]
        y = points[..., 1, None]
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        dxx = a * (a - 1) * x ** np.maximum(a - 2, 0) * y ** b
        dyy = b * (b - 1) * x ** a * y ** np.maximum(b - 2, 0)
        dxy = a * b * x ** np.maximum(a - 1, 0) * y ** np.maximum(b - 1, 0)
        return np.stack([np.stack([dxx, dxy], axis=-1), np.stack([dxy, dyy], axis=-1)], axis=-2)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Basis values at reference points: shape (..., nloc)."""
        return self._monomials(np.asarray(points, dtype=float)) @ self.coefficients

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients: shape (..., nloc, 2)."""
        grads = self._monomial_gradients(np.asarray(points, dtype=float))
        return np.einsum("...md,mi->...id", grads, self.coefficients)

    def hessians(self, points: np.ndarray) -> np.ndarray:
        """Reference Hessians: shape (..., nloc, 2, 2)."""
        hess = self._monomial_hessians(np.asarray(points, dtype=float))
        return np.einsum("...mde,mi->...ide", hess, self.coefficients)


@lru_cache(maxsize=None)
def lagrange_element(order: int) -> LagrangeElement:
    """Cached reference element of the given order."""
    return LagrangeElement(order)
